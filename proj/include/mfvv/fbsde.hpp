#pragma once

#include "mfvv/forward.hpp"
#include "mfvv/hamiltonian.hpp"
#include "mfvv/regression.hpp"

namespace mfvv {

/// Discretized process tuple (X, law(X), Y, Z, controls) on a time grid.
struct FbsdeState {
  ForwardPaths forward;
  std::vector<Mat> adjoint_y;  // n_steps+1 entries of N x d
  std::vector<Mat> adjoint_z;  // n_steps entries of N x d (diagnostic)
  std::vector<Mat> controls;   // n_steps entries of N x d, values in U
  double epsilon = 0.0;
  double gamma = 1.0;
};

/// Discretized S-norm of the difference of two states:
/// E[sup_k(|dX|^2+|dY|^2)] + sum_k dt (|dZ|^2+|da|^2), square-rooted.
double snorm_diff(const FbsdeState& a, const FbsdeState& b);

/// Exogenous input processes of the continuation system E(gamma, xi, I).
struct InputTuple {
  std::vector<Mat> i_b;  // n_steps entries N x d
  std::vector<Mat> i_f;  // n_steps entries N x d
  Vec i_sigma;           // n_steps
  Mat i_g;               // N x d

  static InputTuple zero(int n_steps, int n_particles, int dim);
  /// ||I||: E|I_g|^2 + sum dt (|I_b|^2 + I_sigma^2 + |I_f|^2), square-rooted.
  double norm(double dt) const;
};

/// Y_T per particle: grad_x g plus the empirical mean-field final term.
Mat terminal_condition(const ProblemSpec& spec, const ParticleEnsemble& ensemble_T);

/// Adjoint driver rows at one time: grad_x b^T y + grad_x f plus the
/// empirical mean-field kernel sums (closed-form aggregates when supplied).
Mat adjoint_driver(const ProblemSpec& spec, double t, const ParticleEnsemble& mu, const Mat& y);

struct BackwardResult {
  std::vector<Mat> adjoint_y;
  std::vector<Mat> adjoint_z;
  bool ridged = false;
};

/// Backward induction from the terminal condition. Regression-projected
/// conditional expectations drive the recursion when the paths carry noise;
/// the noise-free case reduces to the plain per-particle recursion with Z=0.
BackwardResult backward_pass(const ProblemSpec& spec, const ForwardPaths& forward,
                             const RegressionConfig& regression, double gamma = 1.0,
                             const InputTuple* input = nullptr);

struct PicardResult {
  FbsdeState state;
  double residual = 0.0;  // S-norm distance to the previous state
  bool ridged = false;
};

/// One damped application of the Picard map: recompute controls from Y,
/// re-run the forward with frozen controls as nearest-neighbor feedback,
/// re-run the backward pass, then blend Y and controls.
PicardResult picard_step(const ProblemSpec& spec, const FbsdeState& state, double damping,
                         const RegressionConfig& regression, double gamma = 1.0,
                         const InputTuple* input = nullptr);

/// The eta-scaled frozen-coefficient inputs that extend a rung-gamma solve to
/// gamma+eta; picard_step at (gamma, these inputs) coincides with picard_step
/// at (gamma+eta, zero inputs).
InputTuple continuation_inputs(const ProblemSpec& spec, const FbsdeState& state, double eta);

/// Direct solve of the decoupled gamma = 0 system (inputs only).
FbsdeState solve_decoupled(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                           double epsilon, std::uint64_t seed, const InputTuple& input);

struct Constants {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, c4 = 0.0, lambda_threshold = 0.0;
};

Constants constants(const ProblemSpec& spec, std::uint64_t seed = 12345);

struct SolverOptions {
  double tol = 1e-8;        // S-norm residual threshold
  int max_picard = 60;      // per rung
  bool continuation = false;
  double damping = 0.5;
  RegressionConfig regression;
};

struct SolveReport {
  std::vector<double> residual_history;
  int picard_iters = 0;
  bool converged = false;
  double max_abs_y = 0.0;
  double adjoint_bound = 0.0;  // C3(T, L)
  bool adjoint_bound_ok = true;
  SecondMomentCheck second_moment;
  Constants constants;
  bool regression_ridged = false;
  bool admissibility_warning = false;
  double delta0 = 0.0;  // continuation step, when used
  int rungs = 0;
};

struct SolveResult {
  FbsdeState state;
  SolveReport report;
};

/// Full solve: damped Picard from the zero initialization, or the
/// continuation ladder in gamma with the step estimated from stability
/// probes. Throws NoConvergence (with the residual history) when the
/// iteration budget runs out.
SolveResult solve_fbsde(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                        double epsilon, std::uint64_t seed, const SolverOptions& options);

/// Feedback representation of the adjoint: per-step regression of Y on X.
class DecouplingField {
 public:
  DecouplingField(const FbsdeState& state, const RegressionConfig& regression);

  Vec eval(int step, const Vec& x) const;
  double slope(int step, int out, int in, const Vec& at) const;
  int steps() const { return static_cast<int>(fits_.size()); }
  bool ridged() const { return ridged_; }
  /// Max over fitted steps of the rms in-sample residual.
  double in_sample_residual() const { return in_sample_residual_; }
  /// Empirical Lipschitz constant over probe pairs inside the cloud box.
  double lipschitz_estimate(int n_probes = 64) const;

 private:
  std::vector<PolynomialFit> fits_;
  bool ridged_ = false;
  double in_sample_residual_ = 0.0;
};

/// u(t, x) = argmin_a H at y = field(t, x); values always in U.
ControlField feedback_control(const DecouplingField& field, const ProblemSpec& spec);

}  // namespace mfvv
