#include "mfvv/hamiltonian.hpp"

#include <cmath>

namespace mfvv {

double hamiltonian(const ProblemSpec& spec, double t, const Vec& x, const ParticleEnsemble& mu,
                   const Vec& y, const Vec& alpha, bool* projected) {
  Vec a = alpha;
  const bool inside = spec.control_set.contains(a, 1e-10);
  if (!inside) a = spec.control_set.project(a);
  if (projected != nullptr) *projected = !inside;
  const double value = (spec.drift(t, x, mu) + a).dot(y) + spec.running_cost(t, x, mu) +
                       spec.control_cost(a);
  if (!std::isfinite(value)) throw NonFiniteEvaluation("hamiltonian evaluated to a non-finite value");
  return value;
}

MinimizeResult minimize_control(const ProblemSpec& spec, const Vec& y,
                                const MinimizerConfig& cfg) {
  if (cfg.max_iter < 1 || cfg.tol_grad_map <= 0.0) throw Error("bad minimizer config");
  MinimizeResult result;

  if (spec.quadratic_control_cost) {
    // argmin of alpha.y + lambda|alpha|^2 over U is proj_U(-y / (2 lambda)).
    result.alpha = spec.control_set.project(-y / (2.0 * spec.lambda));
    result.used_closed_form = true;
    result.residual =
        (result.alpha -
         spec.control_set.project(result.alpha - (y + spec.control_cost_grad(result.alpha))))
            .norm();
    return result;
  }

  // Projected gradient on m(a) = a.y + psi(a), Armijo backtracking.
  auto objective = [&](const Vec& a) { return a.dot(y) + spec.control_cost(a); };
  auto gradient = [&](const Vec& a) -> Vec { return y + spec.control_cost_grad(a); };

  Vec a = spec.control_set.project(Vec::Zero(y.size()));
  double best_residual = std::numeric_limits<double>::infinity();
  Vec best = a;
  const double base_step = 1.0 / (2.0 * spec.lambda + 1.0);
  for (int it = 0; it < cfg.max_iter; ++it) {
    const Vec g = gradient(a);
    if (!g.allFinite()) throw NonFiniteEvaluation("control cost gradient non-finite");
    const double residual = (a - spec.control_set.project(a - g)).norm();
    if (residual < best_residual) {
      best_residual = residual;
      best = a;
    }
    result.iterations = it;
    if (residual <= cfg.tol_grad_map) {
      result.alpha = a;
      result.residual = residual;
      return result;
    }
    double step = base_step;
    const double f0 = objective(a);
    Vec candidate = spec.control_set.project(a - step * g);
    if (cfg.step_rule == MinimizerConfig::StepRule::backtracking) {
      int guard = 0;
      while (objective(candidate) >
                 f0 - 1e-4 / std::max(step, 1e-300) * (candidate - a).squaredNorm() &&
             guard++ < 60) {
        step *= 0.5;
        candidate = spec.control_set.project(a - step * g);
      }
    }
    a = candidate;
  }
  result.alpha = best;
  result.residual = best_residual;
  result.converged = false;
  return result;
}

MinimizeResult minimize_hamiltonian(const ProblemSpec& spec, double /*t*/, const Vec& /*x*/,
                                    const ParticleEnsemble& /*mu*/, const Vec& y,
                                    const MinimizerConfig& cfg) {
  return minimize_control(spec, y, cfg);
}

double verify_minimizer_lipschitz(const ProblemSpec& spec, int n_pairs, std::uint64_t seed,
                                  const MinimizerConfig& cfg) {
  RngStream rng(seed, "lipschitz-pairs");
  const double scale = 2.0 * constant_c3(spec.horizon, spec.lip_const) + 1.0;
  double worst = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    Vec y(spec.dim), yp(spec.dim);
    for (int c = 0; c < spec.dim; ++c) {
      y[c] = rng.uniform(-scale, scale);
      yp[c] = rng.uniform(-scale, scale);
    }
    const double gap = (yp - y).norm();
    if (gap < 1e-12) continue;  // degenerate 0/0 pair
    const Vec a = minimize_control(spec, y, cfg).alpha;
    const Vec ap = minimize_control(spec, yp, cfg).alpha;
    worst = std::max(worst, (ap - a).norm() / gap);
  }
  return worst;
}

}  // namespace mfvv
