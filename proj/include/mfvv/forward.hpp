#pragma once

#include <memory>
#include <vector>

#include "mfvv/problem.hpp"

namespace mfvv {

struct TimeGrid {
  int n_steps = 1;
  double dt = 1.0;
  double horizon = 1.0;

  TimeGrid(double horizon_, int n_steps_);
  double time(int k) const { return k * dt; }
};

/// Feedback control evaluable at any (step, x); values must lie in U.
/// Backed either by a plain function or by per-step particle tables with
/// nearest-neighbor lookup (the frozen-control closure of the Picard loop).
class ControlField {
 public:
  using EvalFn = std::function<Vec(int step, double t, const Vec& x)>;

  static ControlField from_function(EvalFn fn);
  /// Constant-in-time function of x only.
  static ControlField from_state_function(std::function<Vec(const Vec&)> fn);
  /// Per-step anchor clouds and control values; evaluation returns the value
  /// of the nearest anchor (ties resolved toward the lower sorted position).
  static ControlField from_tables(std::shared_ptr<const std::vector<Mat>> anchors,
                                  std::shared_ptr<const std::vector<Mat>> values);

  Vec eval(int step, double t, const Vec& x) const;

 private:
  EvalFn fn_;
  // table backend
  std::shared_ptr<const std::vector<Mat>> anchors_;
  std::shared_ptr<const std::vector<Mat>> values_;
  std::vector<std::vector<int>> sorted_;  // 1-D fast path, per step
};

/// Discretized forward trajectories with their driving noise.
struct ForwardPaths {
  std::vector<Mat> states;  // (n_steps+1) entries of N x d
  std::vector<Mat> noise;   // n_steps entries of N x d, raw Brownian increments
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  TimeGrid grid;

  int n_particles() const { return static_cast<int>(states.front().rows()); }
  int dim() const { return static_cast<int>(states.front().cols()); }
  ParticleEnsemble ensemble_at(int k) const { return ParticleEnsemble(states.at(k)); }
  std::vector<ParticleEnsemble> ensemble_path() const;
};

/// Draws the Brownian increments for (seed, grid, N, d); the same arguments
/// always give the same array, which is how viscosity ladders share noise.
std::vector<Mat> draw_noise(const TimeGrid& grid, int n_particles, int dim, std::uint64_t seed);

/// Sanity band on stored increments: per step and coordinate the empirical
/// mean must satisfy |mean| <= 5 sqrt(dt / N).
bool noise_sanity_ok(const ForwardPaths& paths);

/// Euler-Maruyama for the controlled McKean-Vlasov dynamics with the
/// empirical measure frozen within each step. epsilon = 0 runs the same code
/// path with the noise term scaled to zero.
ForwardPaths simulate_forward(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                              double epsilon, const ControlField& control, std::uint64_t seed);

/// Internal variant: continuation scaling gamma on drift and noise, optional
/// additive input processes, optional pre-drawn initial states and noise.
struct ForwardOptions {
  double gamma = 1.0;
  const std::vector<Mat>* input_drift = nullptr;  // I^b, n_steps entries N x d
  const Vec* input_sigma = nullptr;               // per-step I^sigma added to gamma*sqrt(2 eps)
  const Mat* initial_states = nullptr;
  const std::vector<Mat>* noise = nullptr;
};

ForwardPaths simulate_forward_ex(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                                 double epsilon, const ControlField& control, std::uint64_t seed,
                                 const ForwardOptions& opts);

/// Maximum over the grid of the empirical second moment, against the a-priori
/// closed-form bound [M2(mu0) + 2(1+M+R)T] e^{(2R+5M)T}.
struct SecondMomentCheck {
  double observed = 0.0;
  double bound = 0.0;
  bool ok() const { return observed <= bound; }
};

SecondMomentCheck second_moment_bound_check(const ForwardPaths& paths, const ProblemSpec& spec);

/// Gronwall envelope on |X| implied by the growth assumption: radius(t) such
/// that every particle of a noise-free run stays inside.
double support_envelope(const ProblemSpec& spec, double r0, double t);

}  // namespace mfvv
