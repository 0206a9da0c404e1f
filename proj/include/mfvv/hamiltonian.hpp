#pragma once

#include "mfvv/problem.hpp"

namespace mfvv {

struct MinimizerConfig {
  int max_iter = 500;
  enum class StepRule { fixed, backtracking };
  StepRule step_rule = StepRule::backtracking;
  double tol_grad_map = 1e-10;  // projected-gradient residual at the solution
};

struct MinimizeResult {
  Vec alpha;
  double residual = 0.0;
  int iterations = 0;
  bool converged = true;
  bool used_closed_form = false;
};

/// H(t, x, mu, y, alpha) = (b + alpha) . y + f + psi(alpha).
/// alpha outside U is projected first; *projected reports when that happened.
double hamiltonian(const ProblemSpec& spec, double t, const Vec& x, const ParticleEnsemble& mu,
                   const Vec& y, const Vec& alpha, bool* projected = nullptr);

/// Unique minimizer of H over U at the given adjoint value y. Only the
/// (alpha . y + psi) part depends on alpha, so t, x, mu never matter.
MinimizeResult minimize_control(const ProblemSpec& spec, const Vec& y,
                                const MinimizerConfig& cfg = {});

/// Spec-shaped entry point; forwards to minimize_control.
MinimizeResult minimize_hamiltonian(const ProblemSpec& spec, double t, const Vec& x,
                                    const ParticleEnsemble& mu, const Vec& y,
                                    const MinimizerConfig& cfg = {});

/// Max |a(y') - a(y)| / |y' - y| over random pairs; the minimizer is
/// 1/(2 lambda)-Lipschitz, so the result should not exceed that.
double verify_minimizer_lipschitz(const ProblemSpec& spec, int n_pairs, std::uint64_t seed,
                                  const MinimizerConfig& cfg = {});

}  // namespace mfvv
