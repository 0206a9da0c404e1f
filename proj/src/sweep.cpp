#include "mfvv/sweep.hpp"

#include <cmath>
#include <future>

namespace mfvv {

CostEstimate evaluate_cost_detailed(const ProblemSpec& spec, const ForwardPaths& paths,
                                    const std::vector<Mat>& controls) {
  const int n_steps = paths.grid.n_steps;
  const int n = paths.n_particles();
  const double dt = paths.grid.dt;
  if (static_cast<int>(controls.size()) != n_steps) {
    throw GridMismatch("controls must cover every step");
  }

  Vec per_particle = Vec::Zero(n);
  for (int k = 0; k < n_steps; ++k) {
    const double t = paths.grid.time(k);
    const ParticleEnsemble mu = paths.ensemble_at(k);
    for (int i = 0; i < n; ++i) {
      per_particle[i] += dt * (spec.running_cost(t, paths.states[k].row(i).transpose(), mu) +
                               spec.control_cost(controls[k].row(i).transpose()));
    }
  }
  const ParticleEnsemble mu_T = paths.ensemble_at(n_steps);
  for (int i = 0; i < n; ++i) {
    per_particle[i] += spec.final_cost(paths.states[n_steps].row(i).transpose(), mu_T);
  }
  if (!per_particle.allFinite()) throw NonFiniteEvaluation("non-finite cost sample");

  CostEstimate est;
  est.mean = per_particle.mean();
  if (n > 1) {
    const double var = (per_particle.array() - est.mean).square().sum() / (n - 1);
    est.std_error = std::sqrt(var / n);
  }
  return est;
}

double evaluate_cost(const ProblemSpec& spec, const ForwardPaths& paths,
                     const std::vector<Mat>& controls) {
  return evaluate_cost_detailed(spec, paths, controls).mean;
}

namespace {

// Fixed dictionary of 16 smooth compactly supported test fields: eight
// spatial bumps crossed with two temporal profiles.
double bump(double s) { return std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0; }

double test_field(int m, double t, double horizon, const Vec& x) {
  const double centers[8] = {-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0};
  const double spatial = bump((x[0] - centers[m % 8]) / 1.5);
  const double temporal = m < 8 ? 1.0 : std::sin(M_PI * t / horizon);
  return spatial * temporal;
}

struct SolvedEntry {
  EpsRecord record;
  std::optional<FbsdeState> state;
  std::optional<DecouplingField> field;
};

SolvedEntry solve_entry(const ProblemSpec& spec, const SweepParams& params, double epsilon) {
  SolvedEntry entry;
  entry.record.epsilon = epsilon;
  const TimeGrid grid(spec.horizon, params.n_steps);
  try {
    const std::uint64_t seed =
        params.shared_noise ? params.seed : params.seed + static_cast<std::uint64_t>(1e6 * epsilon);
    SolveResult solved = solve_fbsde(spec, grid, params.n_particles, epsilon, seed, params.solver);
    entry.record.picard_iters = solved.report.picard_iters;
    entry.record.converged = solved.report.converged;
    entry.record.adjoint_bound_ok = solved.report.adjoint_bound_ok;
    entry.record.second_moment_ok = solved.report.second_moment.ok();
    entry.record.max_abs_y = solved.report.max_abs_y;
    const CostEstimate cost =
        evaluate_cost_detailed(spec, solved.state.forward, solved.state.controls);
    entry.record.cost = cost.mean;
    entry.record.cost_std_error = cost.std_error;
    entry.field.emplace(solved.state, params.solver.regression);
    entry.state.emplace(std::move(solved.state));
  } catch (const NoConvergence& e) {
    entry.record.error = e.what();
  } catch (const Error& e) {
    entry.record.error = e.what();
  }
  return entry;
}

// Empirical Lipschitz constant of the feedback over probe pairs taken in the
// realized cloud boxes.
double control_lipschitz(const ControlField& u, const ForwardPaths& paths, std::uint64_t seed) {
  RngStream rng(seed, "probes/control-lipschitz");
  double worst = 0.0;
  const int d = paths.dim();
  for (int k = 0; k < paths.grid.n_steps; ++k) {
    const Vec lo = paths.states[k].colwise().minCoeff().transpose();
    const Vec hi = paths.states[k].colwise().maxCoeff().transpose();
    for (int p = 0; p < 8; ++p) {
      Vec a(d), b(d);
      for (int c = 0; c < d; ++c) {
        a[c] = rng.uniform(lo[c], hi[c]);
        b[c] = rng.uniform(lo[c], hi[c]);
      }
      const double gap = (a - b).norm();
      if (gap < 1e-10) continue;
      const double t = paths.grid.time(k);
      worst = std::max(worst, (u.eval(k, t, a) - u.eval(k, t, b)).norm() / gap);
    }
  }
  return worst;
}

}  // namespace

SweepReport run_sweep(const ProblemSpec& spec, const SweepParams& params) {
  for (std::size_t i = 0; i + 1 < params.eps_ladder.size(); ++i) {
    if (params.eps_ladder[i] <= params.eps_ladder[i + 1]) {
      throw ConfigError("eps ladder must be strictly decreasing");
    }
  }
  if (!params.eps_ladder.empty() && params.eps_ladder.back() <= 0.0) {
    throw ConfigError("ladder entries must be positive (the limit run is implicit)");
  }

  SweepReport report;
  report.seed = params.seed;
  report.n_particles = params.n_particles;
  report.n_steps = params.n_steps;

  // Ladder entries plus the limit run; optionally in parallel, merged in
  // ladder order so the report is independent of scheduling.
  std::vector<double> eps_all = params.eps_ladder;
  eps_all.push_back(0.0);
  std::vector<SolvedEntry> entries(eps_all.size());
  if (params.threads > 1) {
    std::vector<std::future<SolvedEntry>> futures;
    futures.reserve(eps_all.size());
    for (double eps : eps_all) {
      futures.push_back(std::async(std::launch::async,
                                   [&, eps] { return solve_entry(spec, params, eps); }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) entries[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < eps_all.size(); ++i) {
      entries[i] = solve_entry(spec, params, eps_all[i]);
    }
  }

  SolvedEntry& limit = entries.back();
  report.all_converged = true;
  for (const auto& e : entries) {
    if (!e.record.converged) report.all_converged = false;
    if (params.dump_callback && e.state.has_value()) {
      params.dump_callback(e.record.epsilon, e.state->forward);
    }
  }

  if (limit.state.has_value()) {
    const auto path0 = limit.state->forward.ensemble_path();
    const ControlField u0 = feedback_control(*limit.field, spec);
    limit.record.control_lip_estimate =
        control_lipschitz(u0, limit.state->forward, params.seed);
    const double dt = limit.state->forward.grid.dt;
    const int n = limit.state->forward.n_particles();

    for (std::size_t m = 0; m + 1 < entries.size(); ++m) {
      auto& entry = entries[m];
      if (!entry.state.has_value()) continue;
      entry.record.sup_w2_to_limit =
          sup_wasserstein_path(entry.state->forward.ensemble_path(), path0, 2);

      const ControlField ue = feedback_control(*entry.field, spec);
      double gap_sq = 0.0;
      std::vector<double> pairings(16, 0.0);
      for (int k = 0; k < params.n_steps; ++k) {
        const double t = limit.state->forward.grid.time(k);
        for (int i = 0; i < n; ++i) {
          const Vec x = limit.state->forward.states[k].row(i).transpose();
          const Vec du = ue.eval(k, t, x) - u0.eval(k, t, x);
          gap_sq += dt / n * du.squaredNorm();
          for (int f = 0; f < 16; ++f) {
            pairings[f] += dt / n * test_field(f, t, spec.horizon, x) * du.sum();
          }
        }
      }
      entry.record.control_l2_gap_to_limit = std::sqrt(gap_sq);
      entry.record.test_field_pairings = std::move(pairings);
      entry.record.control_lip_estimate =
          control_lipschitz(ue, entry.state->forward, params.seed);
    }
  }

  report.limit = limit.record;
  for (std::size_t m = 0; m + 1 < entries.size(); ++m) {
    report.records.push_back(entries[m].record);
  }

  // Trend verdicts along the ladder.
  report.w2_trend_ok = report.all_converged && !report.records.empty();
  report.control_gap_trend_ok = report.w2_trend_ok;
  report.cost_order_ok = report.w2_trend_ok;
  for (std::size_t m = 0; m < report.records.size(); ++m) {
    const auto& rec = report.records[m];
    if (m + 1 < report.records.size()) {
      const auto& next = report.records[m + 1];
      if (!(next.sup_w2_to_limit < rec.sup_w2_to_limit)) report.w2_trend_ok = false;
      if (!(next.control_l2_gap_to_limit < rec.control_l2_gap_to_limit)) {
        report.control_gap_trend_ok = false;
      }
    }
    const double combined =
        std::sqrt(rec.cost_std_error * rec.cost_std_error +
                  report.limit.cost_std_error * report.limit.cost_std_error);
    if (!(report.limit.cost <= rec.cost + 3.0 * combined)) report.cost_order_ok = false;
  }
  return report;
}

CounterexampleReport run_counterexample(const TimeGrid& grid, int n_particles,
                                        const std::vector<double>& eps_ladder,
                                        std::uint64_t seed) {
  if (eps_ladder.empty()) throw ConfigError("counterexample needs a nonempty eps ladder");
  const ProblemSpec spec = builtin_scenario("counterexample_flat_psi");

  const ControlField sign_control = ControlField::from_state_function([](const Vec& x) {
    Vec u(1);
    u[0] = x[0] > 0.0 ? 1.0 : (x[0] < 0.0 ? -1.0 : 0.0);
    return u;
  });

  CounterexampleReport report;
  report.floor = kCounterexampleFloor;
  report.seed = seed;
  report.n_particles = n_particles;
  report.n_steps = grid.n_steps;
  report.statistically_sufficient = n_particles >= 1024;
  report.floor_verdict = true;
  report.symmetry_verdict = true;

  for (double eps : eps_ladder) {
    CounterexampleRecord rec;
    rec.epsilon = eps;
    const ForwardPaths paths = simulate_forward(spec, grid, n_particles, eps, sign_control, seed);

    std::vector<Mat> controls(grid.n_steps);
    for (int k = 0; k < grid.n_steps; ++k) {
      controls[k].resize(n_particles, 1);
      for (int i = 0; i < n_particles; ++i) {
        controls[k](i, 0) = sign_control.eval(k, grid.time(k), paths.states[k].row(i).transpose())[0];
      }
    }
    rec.cost = evaluate_cost(spec, paths, controls);

    // W2 to a Dirac is the root mean square distance to its location.
    double sup_plus = 0.0, sup_minus = 0.0;
    for (int k = 0; k <= grid.n_steps; ++k) {
      const double t = grid.time(k);
      const auto& x = paths.states[k];
      sup_plus = std::max(sup_plus, std::sqrt((x.array() - t).square().mean()));
      sup_minus = std::max(sup_minus, std::sqrt((x.array() + t).square().mean()));
    }
    rec.divergence = std::min(sup_plus, sup_minus);

    const ParticleEnsemble cloud = paths.ensemble_at(grid.n_steps);
    const ParticleEnsemble reflected(-cloud.points());
    rec.reflection_w1 = wasserstein(cloud, reflected, 1, OtMethod::exact1d);
    const double scale = std::sqrt(cloud.second_moment());
    rec.symmetry_ok = rec.reflection_w1 <= 3.0 * scale / std::sqrt(n_particles) + 1e-12;
    rec.floor_ok = rec.divergence >= kCounterexampleFloor || eps == 0.0;

    report.floor_verdict = report.floor_verdict && rec.floor_ok;
    report.symmetry_verdict = report.symmetry_verdict && rec.symmetry_ok;
    report.records.push_back(rec);
  }
  return report;
}

OptimalityCheck optimality_gap_check(const ProblemSpec& spec, const FbsdeState& state,
                                     const ControlField& feedback,
                                     const ControlField& perturbation) {
  const TimeGrid& grid = state.forward.grid;
  const int n = state.forward.n_particles();

  const ControlField perturbed = ControlField::from_function(
      [&spec, &feedback, &perturbation](int k, double t, const Vec& x) {
        return spec.control_set.project(feedback.eval(k, t, x) + perturbation.eval(k, t, x));
      });

  ForwardOptions opts;
  opts.initial_states = &state.forward.states[0];
  opts.noise = &state.forward.noise;
  const ForwardPaths paths2 = simulate_forward_ex(spec, grid, n, state.epsilon, perturbed,
                                                  state.forward.seed, opts);

  std::vector<Mat> controls2(grid.n_steps);
  double gap_sq = 0.0;
  for (int k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    controls2[k].resize(n, spec.dim);
    for (int i = 0; i < n; ++i) {
      controls2[k].row(i) = perturbed.eval(k, t, paths2.states[k].row(i).transpose()).transpose();
    }
    gap_sq += grid.dt / n * (controls2[k] - state.controls[k]).rowwise().squaredNorm().sum();
  }

  const CostEstimate j_hat = evaluate_cost_detailed(spec, state.forward, state.controls);
  const CostEstimate j_pert = evaluate_cost_detailed(spec, paths2, controls2);

  OptimalityCheck check;
  check.j_hat = j_hat.mean;
  check.j_perturbed = j_pert.mean;
  check.control_gap_sq = gap_sq;
  check.lhs = j_hat.mean + admissibility_gap(spec) * gap_sq;
  const double combined = std::sqrt(j_hat.std_error * j_hat.std_error +
                                    j_pert.std_error * j_pert.std_error);
  check.rhs = j_pert.mean + 3.0 * combined;
  check.ok = check.lhs <= check.rhs;
  return check;
}

}  // namespace mfvv
