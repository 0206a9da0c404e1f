#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfvv/ensemble.hpp"
#include "mfvv/rng.hpp"

namespace mfvv {

/// Convex compact set of admissible control values (box or ball).
class ControlSet {
 public:
  enum class Kind { box, ball };

  static ControlSet box(Vec center, Vec halfwidths);
  static ControlSet ball(Vec center, double radius);
  /// Symmetric box [-r, r]^d.
  static ControlSet symmetric_box(int dim, double r);

  Kind kind() const { return kind_; }
  int dim() const { return static_cast<int>(center_.size()); }
  Vec project(const Vec& y) const;
  bool contains(const Vec& y, double tol = 1e-12) const;
  /// max(1, sup_{u in U} |u|), the R of the admissibility assumption.
  double radius_bound() const;

 private:
  Kind kind_;
  Vec center_;
  Vec halfwidths_;  // box only
  double radius_ = 0.0;  // ball only
};

/// Sampler for the initial measure with its declared compact support box.
struct InitialMeasure {
  std::function<Vec(RngStream&)> draw;
  Vec box_lo, box_hi;
  /// Analytic second moment when known; <0 means estimate by sampling.
  double m2_analytic = -1.0;
};

using DriftFn = std::function<Vec(double, const Vec&, const ParticleEnsemble&)>;
using DriftGradFn = std::function<Mat(double, const Vec&, const ParticleEnsemble&)>;
using DriftDmuFn = std::function<Mat(double, const Vec&, const ParticleEnsemble&, const Vec&)>;
using RunningCostFn = std::function<double(double, const Vec&, const ParticleEnsemble&)>;
using RunningGradFn = std::function<Vec(double, const Vec&, const ParticleEnsemble&)>;
using RunningDmuFn = std::function<Vec(double, const Vec&, const ParticleEnsemble&, const Vec&)>;
using ControlCostFn = std::function<double(const Vec&)>;
using ControlCostGradFn = std::function<Vec(const Vec&)>;
using FinalCostFn = std::function<double(const Vec&, const ParticleEnsemble&)>;
using FinalGradFn = std::function<Vec(const Vec&, const ParticleEnsemble&)>;
using FinalDmuFn = std::function<Vec(const Vec&, const ParticleEnsemble&, const Vec&)>;

/// Optional closed-form mean-field sums. Each one must equal the empirical
/// average of the corresponding pointwise kernel over the cloud; the solver
/// falls back to the O(N^2) kernel loop when a field is empty.
struct MeanFieldAggregates {
  /// rows i: (1/N) sum_j drift_dmu(t, x_j, mu)(x_i)^T y_j
  std::function<Mat(double, const ParticleEnsemble&, const Mat&)> drift_term;
  /// rows i: (1/N) sum_j running_cost_dmu(t, x_j, mu)(x_i)
  std::function<Mat(double, const ParticleEnsemble&)> running_term;
  /// rows i: (1/N) sum_j final_cost_dmu(x_j, mu)(x_i)
  std::function<Mat(const ParticleEnsemble&)> final_term;
};

/// Full data of the control problem: dynamics, costs, derivative kernels,
/// constants of the regularity assumptions, control set, initial measure.
/// Immutable after construction; callbacks must be pure.
struct ProblemSpec {
  int dim = 1;
  double horizon = 1.0;

  DriftFn drift;
  DriftGradFn drift_grad_x;
  DriftDmuFn drift_dmu;

  RunningCostFn running_cost;
  RunningGradFn running_cost_grad_x;
  RunningDmuFn running_cost_dmu;

  ControlCostFn control_cost;
  ControlCostGradFn control_cost_grad;

  FinalCostFn final_cost;
  FinalGradFn final_cost_grad_x;
  FinalDmuFn final_cost_dmu;

  ControlSet control_set = ControlSet::symmetric_box(1, 1.0);
  double lambda = 1.0;        // convexity modulus of the control cost
  double lip_const = 1.0;     // L
  double growth_const = 1.0;  // M
  double control_radius = 1.0;  // R, >= radius_bound() of the control set

  InitialMeasure initial_measure;

  /// True when control_cost is exactly lambda*|a|^2 (enables the closed-form
  /// Hamiltonian minimizer).
  bool quadratic_control_cost = false;

  MeanFieldAggregates aggregates;
  std::string name = "custom";

  /// Second moment of the initial measure: analytic if declared, otherwise
  /// estimated from n_draws samples.
  double m2_mu0(std::uint64_t seed = 12345, int n_draws = 100000) const;
};

struct CheckResult {
  std::string name;
  bool passed = true;
  double worst = 0.0;  // worst observed ratio / error for the check
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool passed() const;
  std::string first_failure() const;
};

/// Probabilistic assumption checks: Lipschitz ratio of the drift, convexity
/// modulus of the control cost, and finite-difference consistency of every
/// supplied gradient/kernel.
ValidationReport validate_spec(const ProblemSpec& spec, int n_probe, std::uint64_t seed);

/// Throws RejectedSpec when validation fails.
void require_valid(const ProblemSpec& spec, int n_probe = 200, std::uint64_t seed = 777);

/// lambda - Lambda(T, L); positive means the sufficient optimality condition
/// holds and the sweep pipeline is admissible.
double admissibility_gap(const ProblemSpec& spec);

/// Builtin scenario library: "lq_1d", "lq_meanfield_1d",
/// "counterexample_flat_psi".
ProblemSpec builtin_scenario(const std::string& name);

struct LqParams {
  double a = -0.1;           // state coefficient of the drift
  double b0 = 0.0;           // constant drift offset
  double mean_coupling = 0.0;  // coefficient of the barycenter in the drift
  double q = 0.0125;         // running cost q*x^2
  double q_final = 0.0125;   // final cost q_T*x^2
  double lambda = 1.0;       // control cost lambda*|u|^2
  double horizon = 1.0;
  double lip_const = 0.1;
  double growth_const = 1.0;
  double control_halfwidth = 1.0;
  double init_lo = 0.5, init_hi = 1.5;  // uniform initial measure
  int dim = 1;
};

/// Parameterized linear-quadratic family behind the builtin scenarios and
/// the CLI "custom" block.
ProblemSpec make_lq_spec(const LqParams& params);

// Closed-form constants of the well-posedness and optimality estimates.
double constant_c1(double T, double m2_mu0, double M, double R);
double constant_c2(double T, double L);
double constant_c3(double T, double L);
double constant_c4(double T, double L);
/// Threshold Lambda(T, L) = T*L*(1+2L)*exp((6L+1)T).
double lambda_threshold(double T, double L);

/// Counterexample control cost: smooth, convex, identically zero on [-1, 1];
/// built from the mollifier exp(-1/t) by double integration (quadrature
/// tolerance 1e-12 absolute).
double flat_psi(double x);
double flat_psi_derivative(double x);

}  // namespace mfvv
