#pragma once

#include <functional>

#include "mfvv/fbsde.hpp"

namespace mfvv {

struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample std of per-particle costs / sqrt(N)
};

/// Monte Carlo cost: mean over particles of g(X_T) plus the rectangle-rule
/// time integral of f + psi(control).
CostEstimate evaluate_cost_detailed(const ProblemSpec& spec, const ForwardPaths& paths,
                                    const std::vector<Mat>& controls);
double evaluate_cost(const ProblemSpec& spec, const ForwardPaths& paths,
                     const std::vector<Mat>& controls);

struct EpsRecord {
  double epsilon = 0.0;
  double cost = 0.0;
  double cost_std_error = 0.0;
  double sup_w2_to_limit = 0.0;
  double control_l2_gap_to_limit = 0.0;
  double control_lip_estimate = 0.0;
  int picard_iters = 0;
  bool converged = false;
  bool adjoint_bound_ok = true;
  bool second_moment_ok = true;
  double max_abs_y = 0.0;
  std::vector<double> test_field_pairings;  // weak-convergence diagnostics
  std::string error;                        // nonempty when the solve failed
};

struct SweepParams {
  int n_steps = 64;
  int n_particles = 1024;
  std::vector<double> eps_ladder;  // strictly decreasing, positive
  std::uint64_t seed = 1;
  SolverOptions solver;
  bool shared_noise = true;  // same increments across the ladder, scaled per eps
  int threads = 1;
  /// Invoked once per solved entry during the ordered merge (single writer).
  std::function<void(double epsilon, const ForwardPaths&)> dump_callback;
};

struct SweepReport {
  std::vector<EpsRecord> records;  // ladder order
  EpsRecord limit;                 // the eps = 0 run
  bool w2_trend_ok = false;           // strictly decreasing along the ladder
  bool control_gap_trend_ok = false;  // strictly decreasing along the ladder
  bool cost_order_ok = false;         // J0 <= Jeps + 3 combined MC std, every eps
  bool all_converged = false;
  std::uint64_t seed = 0;
  int n_particles = 0;
  int n_steps = 0;
};

/// Solves the problem across the viscosity ladder plus the eps = 0 limit and
/// measures the convergence diagnostics of the vanishing-viscosity theorem.
SweepReport run_sweep(const ProblemSpec& spec, const SweepParams& params);

struct CounterexampleRecord {
  double epsilon = 0.0;
  double cost = 0.0;
  double divergence = 0.0;     // min over both Caratheodory branches of sup_t W2
  double reflection_w1 = 0.0;  // final-time cloud vs its reflection
  bool floor_ok = false;
  bool symmetry_ok = false;
};

struct CounterexampleReport {
  std::vector<CounterexampleRecord> records;
  bool floor_verdict = false;
  bool symmetry_verdict = false;
  double floor = 0.0;
  bool statistically_sufficient = true;
  std::uint64_t seed = 0;
  int n_particles = 0;
  int n_steps = 0;
};

/// Non-convergence floor for the divergence D(eps), frozen from a pilot run
/// at N = 8192, T = 1, ladder {0.5, 0.25, 0.125}.
inline constexpr double kCounterexampleFloor = 0.2;

/// Runs the flat-cost scenario under the sign feedback control and measures
/// the distance floor to both Caratheodory branches.
CounterexampleReport run_counterexample(const TimeGrid& grid, int n_particles,
                                        const std::vector<double>& eps_ladder,
                                        std::uint64_t seed);

struct OptimalityCheck {
  double j_hat = 0.0;
  double j_perturbed = 0.0;
  double control_gap_sq = 0.0;  // E int |a_hat - a'|^2 dt
  double lhs = 0.0;             // j_hat + (lambda - Lambda) * gap
  double rhs = 0.0;             // j_perturbed + 3 * combined MC std
  bool ok = false;
};

/// Tests the sufficient-optimality inequality against one perturbed
/// admissible control (same noise).
OptimalityCheck optimality_gap_check(const ProblemSpec& spec, const FbsdeState& state,
                                     const ControlField& feedback,
                                     const ControlField& perturbation);

}  // namespace mfvv
