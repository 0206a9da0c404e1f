#include "mfvv/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mfvv {

TimeGrid::TimeGrid(double horizon_, int n_steps_)
    : n_steps(n_steps_), dt(horizon_ / n_steps_), horizon(horizon_) {
  if (n_steps_ < 1 || horizon_ <= 0.0) throw Error("time grid needs n_steps >= 1, horizon > 0");
}

ControlField ControlField::from_function(EvalFn fn) {
  ControlField f;
  f.fn_ = std::move(fn);
  return f;
}

ControlField ControlField::from_state_function(std::function<Vec(const Vec&)> fn) {
  return from_function([fn = std::move(fn)](int, double, const Vec& x) { return fn(x); });
}

ControlField ControlField::from_tables(std::shared_ptr<const std::vector<Mat>> anchors,
                                       std::shared_ptr<const std::vector<Mat>> values) {
  if (!anchors || !values || anchors->size() != values->size() || anchors->empty()) {
    throw Error("control tables must pair anchors with values per step");
  }
  ControlField f;
  f.anchors_ = std::move(anchors);
  f.values_ = std::move(values);
  if ((*f.anchors_)[0].cols() == 1) {
    // Sorted index per step for binary-search nearest neighbor.
    f.sorted_.resize(f.anchors_->size());
    for (std::size_t k = 0; k < f.anchors_->size(); ++k) {
      const Mat& a = (*f.anchors_)[k];
      auto& idx = f.sorted_[k];
      idx.resize(a.rows());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](int l, int r) {
        if (a(l, 0) != a(r, 0)) return a(l, 0) < a(r, 0);
        return l < r;
      });
    }
  }
  return f;
}

Vec ControlField::eval(int step, double t, const Vec& x) const {
  if (fn_) return fn_(step, t, x);
  const std::size_t k = std::min<std::size_t>(step, anchors_->size() - 1);
  const Mat& anchors = (*anchors_)[k];
  const Mat& values = (*values_)[k];
  int best = 0;
  if (!sorted_.empty()) {
    const auto& idx = sorted_[k];
    const double xv = x[0];
    auto it = std::lower_bound(idx.begin(), idx.end(), xv,
                               [&](int i, double v) { return anchors(i, 0) < v; });
    best = it == idx.end() ? idx.back() : *it;
    if (it != idx.begin()) {
      const int left = *(it - 1);
      // Lower sorted position wins ties for determinism.
      if (std::abs(anchors(left, 0) - xv) <= std::abs(anchors(best, 0) - xv)) best = left;
    }
  } else {
    double bd = std::numeric_limits<double>::infinity();
    for (int i = 0; i < anchors.rows(); ++i) {
      const double d = (anchors.row(i).transpose() - x).norm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
  }
  return values.row(best).transpose();
}

std::vector<ParticleEnsemble> ForwardPaths::ensemble_path() const {
  std::vector<ParticleEnsemble> out;
  out.reserve(states.size());
  for (const auto& s : states) out.emplace_back(s);
  return out;
}

std::vector<Mat> draw_noise(const TimeGrid& grid, int n_particles, int dim, std::uint64_t seed) {
  RngStream rng(seed, "forward-noise");
  const double sd = std::sqrt(grid.dt);
  std::vector<Mat> noise(grid.n_steps);
  for (int k = 0; k < grid.n_steps; ++k) {
    noise[k].resize(n_particles, dim);
    for (int i = 0; i < n_particles; ++i) {
      for (int c = 0; c < dim; ++c) noise[k](i, c) = sd * rng.gaussian();
    }
  }
  return noise;
}

bool noise_sanity_ok(const ForwardPaths& paths) {
  const double band = 5.0 * std::sqrt(paths.grid.dt / paths.n_particles());
  for (const auto& step : paths.noise) {
    const Vec mean = step.colwise().mean().transpose();
    if (mean.cwiseAbs().maxCoeff() > band) return false;
  }
  return true;
}

ForwardPaths simulate_forward(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                              double epsilon, const ControlField& control, std::uint64_t seed) {
  return simulate_forward_ex(spec, grid, n_particles, epsilon, control, seed, {});
}

ForwardPaths simulate_forward_ex(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                                 double epsilon, const ControlField& control, std::uint64_t seed,
                                 const ForwardOptions& opts) {
  if (epsilon < 0.0 || epsilon > 1.0) throw Error("epsilon must lie in [0, 1]");
  if (n_particles < 1) throw Error("need at least one particle");
  const int d = spec.dim;

  ForwardPaths paths{{}, {}, seed, epsilon, grid};
  paths.states.resize(grid.n_steps + 1);
  paths.noise = opts.noise != nullptr ? *opts.noise : draw_noise(grid, n_particles, d, seed);

  if (opts.initial_states != nullptr) {
    paths.states[0] = *opts.initial_states;
  } else {
    RngStream init(seed, "initial-sampling");
    Mat x0(n_particles, d);
    for (int i = 0; i < n_particles; ++i) x0.row(i) = spec.initial_measure.draw(init).transpose();
    paths.states[0] = std::move(x0);
  }

  const double sigma_base = opts.gamma * std::sqrt(2.0 * epsilon);
  for (int k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const double sigma = sigma_base + (opts.input_sigma != nullptr ? (*opts.input_sigma)[k] : 0.0);
    const ParticleEnsemble mu_k(paths.states[k]);
    Mat next(n_particles, d);
    for (int i = 0; i < n_particles; ++i) {
      const Vec xi = paths.states[k].row(i).transpose();
      Vec drift = Vec::Zero(d);
      if (opts.gamma != 0.0) {
        drift = opts.gamma * (spec.drift(t, xi, mu_k) + control.eval(k, t, xi));
      }
      if (opts.input_drift != nullptr) drift += (*opts.input_drift)[k].row(i).transpose();
      if (!drift.allFinite()) throw NonFiniteEvaluation("drift or control non-finite");
      next.row(i) = (xi + grid.dt * drift + sigma * paths.noise[k].row(i).transpose()).transpose();
    }
    if (next.cwiseAbs().maxCoeff() > 1e8) {
      throw BlowUp("forward state exceeded 1e8 at step " + std::to_string(k + 1));
    }
    paths.states[k + 1] = std::move(next);
  }
  return paths;
}

SecondMomentCheck second_moment_bound_check(const ForwardPaths& paths, const ProblemSpec& spec) {
  SecondMomentCheck check;
  for (const auto& s : paths.states) {
    check.observed = std::max(check.observed, s.rowwise().squaredNorm().mean());
  }
  const double T = spec.horizon;
  const double M = spec.growth_const;
  const double R = spec.control_radius;
  check.bound = (spec.m2_mu0(paths.seed) + 2.0 * (1.0 + M + R) * T) *
                std::exp((2.0 * R + 5.0 * M) * T);
  return check;
}

double support_envelope(const ProblemSpec& spec, double r0, double t) {
  const double M = spec.growth_const;
  const double R = spec.control_radius;
  // rho' <= 2 M rho + M + R from the growth assumption with mean(|x|) <= rho.
  return (r0 + (M + R) / (2.0 * M)) * std::exp(2.0 * M * t) - (M + R) / (2.0 * M);
}

}  // namespace mfvv
