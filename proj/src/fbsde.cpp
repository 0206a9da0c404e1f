#include "mfvv/fbsde.hpp"

#include <cmath>

namespace mfvv {

namespace {

Mat mean_field_drift_term(const ProblemSpec& spec, double t, const ParticleEnsemble& mu,
                          const Mat& y) {
  if (spec.aggregates.drift_term) return spec.aggregates.drift_term(t, mu, y);
  const int n = mu.size();
  const int d = mu.dim();
  Mat out = Mat::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    const Vec xi = mu.point(i);
    Vec acc = Vec::Zero(d);
    for (int j = 0; j < n; ++j) {
      acc += spec.drift_dmu(t, mu.point(j), mu, xi).transpose() * y.row(j).transpose();
    }
    out.row(i) = (acc / n).transpose();
  }
  return out;
}

Mat mean_field_running_term(const ProblemSpec& spec, double t, const ParticleEnsemble& mu) {
  if (spec.aggregates.running_term) return spec.aggregates.running_term(t, mu);
  const int n = mu.size();
  const int d = mu.dim();
  Mat out = Mat::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    const Vec xi = mu.point(i);
    Vec acc = Vec::Zero(d);
    for (int j = 0; j < n; ++j) acc += spec.running_cost_dmu(t, mu.point(j), mu, xi);
    out.row(i) = (acc / n).transpose();
  }
  return out;
}

Mat mean_field_final_term(const ProblemSpec& spec, const ParticleEnsemble& mu) {
  if (spec.aggregates.final_term) return spec.aggregates.final_term(mu);
  const int n = mu.size();
  const int d = mu.dim();
  Mat out = Mat::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    const Vec xi = mu.point(i);
    Vec acc = Vec::Zero(d);
    for (int j = 0; j < n; ++j) acc += spec.final_cost_dmu(mu.point(j), mu, xi);
    out.row(i) = (acc / n).transpose();
  }
  return out;
}

void require_finite(const Mat& m, const char* who) {
  if (!m.allFinite()) throw NonFiniteEvaluation(std::string(who) + " non-finite");
}

}  // namespace

double snorm_diff(const FbsdeState& a, const FbsdeState& b) {
  const int n_steps = static_cast<int>(a.controls.size());
  const int n = a.forward.n_particles();
  const double dt = a.forward.grid.dt;
  if (b.controls.size() != a.controls.size() || b.forward.n_particles() != n) {
    throw GridMismatch("states must share grid and particle count");
  }
  Vec sup = Vec::Zero(n);
  double integral = 0.0;
  for (int k = 0; k <= n_steps; ++k) {
    const Mat dx = a.forward.states[k] - b.forward.states[k];
    const Mat dy = a.adjoint_y[k] - b.adjoint_y[k];
    sup = sup.cwiseMax((dx.rowwise().squaredNorm() + dy.rowwise().squaredNorm()).eval());
    if (k < n_steps) {
      const Mat dz = a.adjoint_z[k] - b.adjoint_z[k];
      const Mat da = a.controls[k] - b.controls[k];
      integral += dt * (dz.rowwise().squaredNorm().mean() + da.rowwise().squaredNorm().mean());
    }
  }
  return std::sqrt(sup.mean() + integral);
}

InputTuple InputTuple::zero(int n_steps, int n_particles, int dim) {
  InputTuple in;
  in.i_b.assign(n_steps, Mat::Zero(n_particles, dim));
  in.i_f.assign(n_steps, Mat::Zero(n_particles, dim));
  in.i_sigma = Vec::Zero(n_steps);
  in.i_g = Mat::Zero(n_particles, dim);
  return in;
}

double InputTuple::norm(double dt) const {
  double acc = i_g.rowwise().squaredNorm().mean();
  for (std::size_t k = 0; k < i_b.size(); ++k) {
    acc += dt * (i_b[k].rowwise().squaredNorm().mean() + i_sigma[k] * i_sigma[k] +
                 i_f[k].rowwise().squaredNorm().mean());
  }
  return std::sqrt(acc);
}

Mat terminal_condition(const ProblemSpec& spec, const ParticleEnsemble& ensemble_T) {
  const int n = ensemble_T.size();
  Mat y(n, spec.dim);
  for (int i = 0; i < n; ++i) {
    y.row(i) = spec.final_cost_grad_x(ensemble_T.point(i), ensemble_T).transpose();
  }
  y += mean_field_final_term(spec, ensemble_T);
  require_finite(y, "terminal condition");
  return y;
}

Mat adjoint_driver(const ProblemSpec& spec, double t, const ParticleEnsemble& mu, const Mat& y) {
  const int n = mu.size();
  Mat out(n, spec.dim);
  for (int i = 0; i < n; ++i) {
    const Vec xi = mu.point(i);
    out.row(i) = (spec.drift_grad_x(t, xi, mu).transpose() * y.row(i).transpose() +
                  spec.running_cost_grad_x(t, xi, mu))
                     .transpose();
  }
  out += mean_field_drift_term(spec, t, mu, y);
  out += mean_field_running_term(spec, t, mu);
  require_finite(out, "adjoint driver");
  return out;
}

BackwardResult backward_pass(const ProblemSpec& spec, const ForwardPaths& forward,
                             const RegressionConfig& regression, double gamma,
                             const InputTuple* input) {
  const int n_steps = forward.grid.n_steps;
  const int n = forward.n_particles();
  const int d = forward.dim();
  const double dt = forward.grid.dt;

  BackwardResult res;
  res.adjoint_y.assign(n_steps + 1, Mat::Zero(n, d));
  res.adjoint_z.assign(n_steps, Mat::Zero(n, d));

  const ParticleEnsemble mu_T = forward.ensemble_at(n_steps);
  res.adjoint_y[n_steps] = gamma * terminal_condition(spec, mu_T);
  if (input != nullptr) res.adjoint_y[n_steps] += input->i_g;

  for (int k = n_steps - 1; k >= 0; --k) {
    const ParticleEnsemble mu_next = forward.ensemble_at(k + 1);
    Mat target = res.adjoint_y[k + 1];
    if (gamma != 0.0) {
      target += dt * gamma *
                adjoint_driver(spec, forward.grid.time(k + 1), mu_next, res.adjoint_y[k + 1]);
    }
    if (input != nullptr) target += dt * input->i_f[k];

    const double sigma_eff = gamma * std::sqrt(2.0 * forward.epsilon) +
                             (input != nullptr ? input->i_sigma[k] : 0.0);
    if (sigma_eff == 0.0) {
      // Deterministic paths: the conditional expectation is the identity.
      res.adjoint_y[k] = std::move(target);
      continue;
    }
    PolynomialFit fit(forward.states[k], target, regression);
    res.ridged = res.ridged || fit.ridged();
    res.adjoint_y[k] = fit.evaluate_all(forward.states[k]);

    // Z from the martingale increment, diagonal components only.
    const Mat zt = res.adjoint_y[k + 1].cwiseProduct(forward.noise[k]) / (dt * sigma_eff);
    PolynomialFit zfit(forward.states[k], zt, regression);
    res.ridged = res.ridged || zfit.ridged();
    res.adjoint_z[k] = zfit.evaluate_all(forward.states[k]);
  }
  return res;
}

namespace {

std::vector<Mat> controls_from_y(const ProblemSpec& spec, const std::vector<Mat>& y,
                                 int n_steps) {
  std::vector<Mat> a(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    a[k].resize(y[k].rows(), y[k].cols());
    for (int i = 0; i < y[k].rows(); ++i) {
      a[k].row(i) = minimize_control(spec, y[k].row(i).transpose()).alpha.transpose();
    }
  }
  return a;
}

ControlField table_field(const std::vector<Mat>& anchors_states, const std::vector<Mat>& values) {
  auto anchors = std::make_shared<std::vector<Mat>>(anchors_states.begin(),
                                                    anchors_states.begin() + values.size());
  auto vals = std::make_shared<std::vector<Mat>>(values);
  return ControlField::from_tables(std::move(anchors), std::move(vals));
}

ForwardPaths forward_with(const ProblemSpec& spec, const FbsdeState& state,
                          const std::vector<Mat>& controls, double gamma,
                          const InputTuple* input) {
  ForwardOptions opts;
  opts.gamma = gamma;
  opts.initial_states = &state.forward.states[0];
  opts.noise = &state.forward.noise;
  if (input != nullptr) {
    opts.input_drift = &input->i_b;
    opts.input_sigma = &input->i_sigma;
  }
  const ControlField field = table_field(state.forward.states, controls);
  return simulate_forward_ex(spec, state.forward.grid, state.forward.n_particles(),
                             state.epsilon, field, state.forward.seed, opts);
}

}  // namespace

PicardResult picard_step(const ProblemSpec& spec, const FbsdeState& state, double damping,
                         const RegressionConfig& regression, double gamma,
                         const InputTuple* input) {
  if (damping <= 0.0 || damping > 1.0) throw Error("damping must lie in (0, 1]");
  const int n_steps = state.forward.grid.n_steps;

  // (1) proposal controls from the current adjoint
  const std::vector<Mat> a_prop = controls_from_y(spec, state.adjoint_y, n_steps);

  // (2) forward under the frozen proposal controls (nearest-neighbor feedback)
  FbsdeState proposal = state;
  proposal.forward = forward_with(spec, state, a_prop, gamma, input);

  // (3) backward on the proposed paths
  BackwardResult back = backward_pass(spec, proposal.forward, regression, gamma, input);

  // (4) blend Y and controls, then recompute the forward from the blend
  PicardResult out;
  out.ridged = back.ridged;
  out.state = state;
  out.state.adjoint_z = std::move(back.adjoint_z);
  for (int k = 0; k <= n_steps; ++k) {
    out.state.adjoint_y[k] = damping * back.adjoint_y[k] + (1.0 - damping) * state.adjoint_y[k];
  }
  for (int k = 0; k < n_steps; ++k) {
    out.state.controls[k] = damping * a_prop[k] + (1.0 - damping) * state.controls[k];
  }
  out.state.forward = forward_with(spec, state, out.state.controls, gamma, input);
  out.state.gamma = gamma;
  out.residual = snorm_diff(out.state, state);
  return out;
}

InputTuple continuation_inputs(const ProblemSpec& spec, const FbsdeState& state, double eta) {
  const int n_steps = state.forward.grid.n_steps;
  const int n = state.forward.n_particles();
  const int d = state.forward.dim();
  InputTuple in = InputTuple::zero(n_steps, n, d);
  for (int k = 0; k < n_steps; ++k) {
    const double t = state.forward.grid.time(k);
    const ParticleEnsemble mu(state.forward.states[k]);
    for (int i = 0; i < n; ++i) {
      const Vec xi = state.forward.states[k].row(i).transpose();
      const Vec a_hat = minimize_control(spec, state.adjoint_y[k].row(i).transpose()).alpha;
      in.i_b[k].row(i) = eta * (spec.drift(t, xi, mu) + a_hat);
    }
    // Frozen driver at the right endpoint, matching the backward convention.
    const ParticleEnsemble mu_next(state.forward.states[k + 1]);
    in.i_f[k] = eta * adjoint_driver(spec, state.forward.grid.time(k + 1), mu_next,
                                     state.adjoint_y[k + 1]);
    in.i_sigma[k] = eta * std::sqrt(2.0 * state.epsilon);
  }
  in.i_g = eta * terminal_condition(spec, ParticleEnsemble(state.forward.states[n_steps]));
  return in;
}

FbsdeState solve_decoupled(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                           double epsilon, std::uint64_t seed, const InputTuple& input) {
  FbsdeState state;
  state.epsilon = epsilon;
  state.gamma = 0.0;

  ForwardOptions opts;
  opts.gamma = 0.0;
  opts.input_drift = &input.i_b;
  opts.input_sigma = &input.i_sigma;
  const ControlField zero_field = ControlField::from_function(
      [d = spec.dim](int, double, const Vec&) { return Vec::Zero(d); });
  state.forward = simulate_forward_ex(spec, grid, n_particles, epsilon, zero_field, seed, opts);

  const int n_steps = grid.n_steps;
  state.adjoint_y.assign(n_steps + 1, Mat::Zero(n_particles, spec.dim));
  state.adjoint_z.assign(n_steps, Mat::Zero(n_particles, spec.dim));
  state.adjoint_y[n_steps] = input.i_g;
  for (int k = n_steps - 1; k >= 0; --k) {
    state.adjoint_y[k] = state.adjoint_y[k + 1] + grid.dt * input.i_f[k];
  }
  state.controls = controls_from_y(spec, state.adjoint_y, n_steps);
  return state;
}

Constants constants(const ProblemSpec& spec, std::uint64_t seed) {
  Constants c;
  const double T = spec.horizon;
  const double L = spec.lip_const;
  c.c1 = constant_c1(T, spec.m2_mu0(seed), spec.growth_const, spec.control_radius);
  c.c2 = constant_c2(T, L);
  c.c3 = constant_c3(T, L);
  c.c4 = constant_c4(T, L);
  c.lambda_threshold = lambda_threshold(T, L);
  return c;
}

namespace {

FbsdeState initial_state(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                         double epsilon, std::uint64_t seed, double gamma) {
  FbsdeState state;
  state.epsilon = epsilon;
  state.gamma = gamma;

  const Vec alpha0 = minimize_control(spec, Vec::Zero(spec.dim)).alpha;
  ForwardOptions opts;
  opts.gamma = gamma;
  const ControlField const_field =
      ControlField::from_function([alpha0](int, double, const Vec&) { return alpha0; });
  state.forward = simulate_forward_ex(spec, grid, n_particles, epsilon, const_field, seed, opts);
  state.adjoint_y.assign(grid.n_steps + 1, Mat::Zero(n_particles, spec.dim));
  state.adjoint_z.assign(grid.n_steps, Mat::Zero(n_particles, spec.dim));
  state.controls.assign(grid.n_steps, Vec::Ones(n_particles) * alpha0.transpose());
  return state;
}

// Stability constant of the decoupled system from two probe solves.
double probe_stability_constant(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                                double epsilon, std::uint64_t seed) {
  const InputTuple zero = InputTuple::zero(grid.n_steps, n_particles, spec.dim);
  InputTuple pert = zero;
  for (int k = 0; k < grid.n_steps; ++k) {
    pert.i_b[k].setConstant(0.1);
    pert.i_f[k].setConstant(0.1);
  }
  pert.i_g.setConstant(0.1);
  const FbsdeState base = solve_decoupled(spec, grid, n_particles, epsilon, seed, zero);
  const FbsdeState moved = solve_decoupled(spec, grid, n_particles, epsilon, seed, pert);
  return snorm_diff(base, moved) / pert.norm(grid.dt);
}

}  // namespace

SolveResult solve_fbsde(const ProblemSpec& spec, const TimeGrid& grid, int n_particles,
                        double epsilon, std::uint64_t seed, const SolverOptions& options) {
  SolveResult out;
  out.report.constants = constants(spec, seed);
  out.report.adjoint_bound = out.report.constants.c3;
  out.report.admissibility_warning = admissibility_gap(spec) <= 0.0;

  auto run_rung = [&](FbsdeState& state, double gamma) {
    for (int it = 0; it < options.max_picard; ++it) {
      PicardResult step = picard_step(spec, state, options.damping, options.regression, gamma);
      out.report.regression_ridged = out.report.regression_ridged || step.ridged;
      state = std::move(step.state);
      out.report.residual_history.push_back(step.residual);
      ++out.report.picard_iters;
      if (step.residual <= options.tol) return true;
    }
    return false;
  };

  FbsdeState state;
  if (!options.continuation) {
    state = initial_state(spec, grid, n_particles, epsilon, seed, 1.0);
    if (!run_rung(state, 1.0)) {
      throw NoConvergence("picard iteration did not reach tolerance",
                          out.report.residual_history);
    }
  } else {
    const double c_stab = probe_stability_constant(spec, grid, n_particles, epsilon, seed);
    const double delta0 = std::min(0.25, 1.0 / (2.0 * std::max(c_stab, 1e-6)));
    out.report.delta0 = delta0;
    state = solve_decoupled(spec, grid, n_particles, epsilon, seed,
                            InputTuple::zero(grid.n_steps, n_particles, spec.dim));
    double gamma = 0.0;
    while (gamma < 1.0) {
      gamma = std::min(1.0, gamma + delta0);
      ++out.report.rungs;
      if (!run_rung(state, gamma)) {
        throw NoConvergence("continuation rung at gamma=" + std::to_string(gamma) +
                                " did not converge",
                            out.report.residual_history);
      }
    }
  }

  out.report.converged = true;
  for (const auto& y : state.adjoint_y) {
    out.report.max_abs_y = std::max(out.report.max_abs_y, y.cwiseAbs().maxCoeff());
  }
  out.report.adjoint_bound_ok = out.report.max_abs_y <= out.report.adjoint_bound * 1.5;
  out.report.second_moment = second_moment_bound_check(state.forward, spec);
  out.state = std::move(state);
  return out;
}

DecouplingField::DecouplingField(const FbsdeState& state, const RegressionConfig& regression) {
  const int n_steps = state.forward.grid.n_steps;
  fits_.reserve(n_steps + 1);
  for (int k = 0; k <= n_steps; ++k) {
    fits_.emplace_back(state.forward.states[k], state.adjoint_y[k], regression);
    ridged_ = ridged_ || fits_.back().ridged();
    const Mat reproduced = fits_.back().evaluate_all(state.forward.states[k]);
    const double rms = std::sqrt((reproduced - state.adjoint_y[k]).squaredNorm() /
                                 state.adjoint_y[k].size());
    in_sample_residual_ = std::max(in_sample_residual_, rms);
  }
}

Vec DecouplingField::eval(int step, const Vec& x) const {
  const int k = std::clamp(step, 0, static_cast<int>(fits_.size()) - 1);
  return fits_[k].evaluate(x);
}

double DecouplingField::slope(int step, int out, int in, const Vec& at) const {
  const int k = std::clamp(step, 0, static_cast<int>(fits_.size()) - 1);
  return fits_[k].derivative(at, out, in);
}

double DecouplingField::lipschitz_estimate(int n_probes) const {
  double worst = 0.0;
  RngStream rng(2024, "field-lipschitz");
  for (std::size_t k = 0; k < fits_.size(); ++k) {
    const Vec lo = fits_[k].clamp_lo();
    const Vec hi = fits_[k].clamp_hi();
    for (int p = 0; p < n_probes; ++p) {
      Vec a(lo.size()), b(lo.size());
      for (int c = 0; c < lo.size(); ++c) {
        a[c] = rng.uniform(lo[c], hi[c]);
        b[c] = rng.uniform(lo[c], hi[c]);
      }
      const double gap = (a - b).norm();
      if (gap < 1e-12) continue;
      worst = std::max(worst,
                       (fits_[k].evaluate(a) - fits_[k].evaluate(b)).norm() / gap);
    }
  }
  return worst;
}

ControlField feedback_control(const DecouplingField& field, const ProblemSpec& spec) {
  // Both captured by value: the field outlives the solve and the spec is a
  // shareable bundle of immutable callbacks.
  return ControlField::from_function(
      [field, spec](int step, double, const Vec& x) {
        return minimize_control(spec, field.eval(step, x)).alpha;
      });
}

}  // namespace mfvv
