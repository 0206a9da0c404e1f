#include "mfvv/pde1d.hpp"

#include <algorithm>
#include <cmath>

namespace mfvv {

ParticleEnsemble GridDensity::ensemble_at(int k) const {
  const Vec& rho = slices.at(k);
  Mat pts(n_x, 1);
  Vec w(n_x);
  const double h = dx();
  for (int i = 0; i < n_x; ++i) {
    pts(i, 0) = center(i);
    w[i] = rho[i] * h;
  }
  const double total = w.sum();
  if (total <= 0.0) throw MassLoss("empty density slice");
  w /= total;
  return ParticleEnsemble(std::move(pts), std::move(w));
}

ParticleEnsemble GridDensity::quantile_ensemble(int k, int n) const {
  const Vec& rho = slices.at(k);
  const double h = dx();
  const double total = rho.sum() * h;
  if (total <= 0.0) throw MassLoss("empty density slice");

  Mat pts(n, 1);
  int cell = 0;
  double cum = 0.0;  // mass strictly below the current cell
  for (int q = 0; q < n; ++q) {
    const double target = total * (q + 0.5) / n;
    while (cell < n_x - 1 && cum + rho[cell] * h < target) {
      cum += rho[cell] * h;
      ++cell;
    }
    const double cell_mass = rho[cell] * h;
    // Piecewise-constant density => piecewise-linear CDF, exact inverse.
    const double frac = cell_mass > 0.0 ? std::clamp((target - cum) / cell_mass, 0.0, 1.0) : 0.5;
    pts(q, 0) = x_min + (cell + frac) * h;
  }
  return ParticleEnsemble(std::move(pts));
}

GridDensity GridDensity::uniform_box(double lo, double hi, double x_min, double x_max, int n_x) {
  if (hi <= lo) throw Error("uniform_box needs hi > lo");
  GridDensity g{x_min, x_max, n_x, {}};
  Vec rho = Vec::Zero(n_x);
  const double h = g.dx();
  const double level = 1.0 / (hi - lo);
  for (int i = 0; i < n_x; ++i) {
    const double a = x_min + i * h;
    const double b = a + h;
    const double overlap = std::max(0.0, std::min(b, hi) - std::max(a, lo));
    rho[i] = level * overlap / h;
  }
  const double mass = rho.sum() * h;
  if (mass <= 0.0) throw Error("uniform_box support outside the grid");
  rho /= mass;
  g.slices.push_back(std::move(rho));
  return g;
}

GridDensity GridDensity::delta(double x0, double x_min, double x_max, int n_x) {
  GridDensity g{x_min, x_max, n_x, {}};
  Vec rho = Vec::Zero(n_x);
  const double h = g.dx();
  int cell = static_cast<int>((x0 - x_min) / h);
  cell = std::clamp(cell, 0, n_x - 1);
  rho[cell] = 1.0 / h;
  g.slices.push_back(std::move(rho));
  return g;
}

namespace {

// Re-embed a slice into a wider grid with identical dx (zero padding).
GridDensity pad_domain(const GridDensity& d0, double lo, double hi) {
  const double h = d0.dx();
  const int extra_lo = std::max(0, static_cast<int>(std::ceil((d0.x_min - lo) / h)));
  const int extra_hi = std::max(0, static_cast<int>(std::ceil((hi - d0.x_max) / h)));
  if (extra_lo == 0 && extra_hi == 0) return d0;
  GridDensity g;
  g.x_min = d0.x_min - extra_lo * h;
  g.x_max = d0.x_max + extra_hi * h;
  g.n_x = d0.n_x + extra_lo + extra_hi;
  Vec rho = Vec::Zero(g.n_x);
  rho.segment(extra_lo, d0.n_x) = d0.slices.at(0);
  g.slices.push_back(std::move(rho));
  return g;
}

double slice_support_radius(const GridDensity& d) {
  const Vec& rho = d.slices.at(0);
  double r = 0.0;
  for (int i = 0; i < d.n_x; ++i) {
    if (rho[i] > 0.0) r = std::max(r, std::abs(d.center(i)) + 0.5 * d.dx());
  }
  return r;
}

}  // namespace

GridDensity pde_oracle_1d(const ProblemSpec& spec, const TimeGrid& grid,
                          const GridDensity& density0, double epsilon,
                          const ControlField& control) {
  if (spec.dim != 1) throw DimensionMismatch("pde oracle is 1-D only");
  if (density0.slices.size() != 1) throw Error("density0 must hold exactly one slice");
  if ((density0.slices[0].array() < 0.0).any()) throw Error("density0 must be nonnegative");
  if (std::abs(density0.mass(0) - 1.0) > 1e-8) throw Error("density0 must have unit mass");

  const double r0 = slice_support_radius(density0);
  const double reach = support_envelope(spec, r0, spec.horizon) +
                       6.0 * std::sqrt(2.0 * epsilon * spec.horizon);
  GridDensity g = pad_domain(density0, -reach, reach);
  const double h = g.dx();
  const int n = g.n_x;
  const double dt = grid.dt;
  const double initial_mass = g.mass(0);

  g.slices.reserve(grid.n_steps + 1);
  for (int k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const Vec& rho = g.slices.back();
    const ParticleEnsemble mu = g.ensemble_at(k);

    // Face velocities v_{i+1/2}, i = 0..n-2 (boundary faces carry no flux).
    Vec v(n - 1);
    double vmax = 0.0;
    for (int i = 0; i + 1 < n; ++i) {
      Vec xf(1);
      xf[0] = g.x_min + (i + 1) * h;
      const Vec vel = spec.drift(t, xf, mu) + control.eval(k, t, xf);
      if (!vel.allFinite()) throw NonFiniteEvaluation("pde velocity non-finite");
      v[i] = vel[0];
      vmax = std::max(vmax, std::abs(v[i]));
    }
    if (dt * (vmax / h + 2.0 * epsilon / (h * h)) > 0.9) {
      throw CflViolation("CFL number exceeded 0.9 at step " + std::to_string(k));
    }

    Vec flux(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
      const double adv = v[i] >= 0.0 ? v[i] * rho[i] : v[i] * rho[i + 1];
      const double diff = -epsilon * (rho[i + 1] - rho[i]) / h;
      flux[i] = adv + diff;
    }

    Vec next(n);
    for (int i = 0; i < n; ++i) {
      const double fr = i + 1 < n ? flux[i] : 0.0;
      const double fl = i > 0 ? flux[i - 1] : 0.0;
      next[i] = rho[i] - dt / h * (fr - fl);
      if (next[i] < 0.0) next[i] = std::max(next[i], -1e-14);  // round-off guard
    }
    next = next.cwiseMax(0.0);
    g.slices.push_back(std::move(next));
    if (std::abs(g.mass(k + 1) - initial_mass) > 1e-6) {
      throw MassLoss("pde mass drifted beyond 1e-6 at step " + std::to_string(k + 1));
    }
  }
  return g;
}

std::vector<double> particle_vs_pde_gap(const ForwardPaths& paths, const GridDensity& density,
                                        int p) {
  if (paths.dim() != 1) throw DimensionMismatch("gap is defined in 1-D");
  if (density.slices.size() != paths.states.size()) {
    throw GridMismatch("particle and pde runs must share the time grid");
  }
  std::vector<double> gaps(paths.states.size());
  for (std::size_t k = 0; k < paths.states.size(); ++k) {
    const auto cloud = paths.ensemble_at(static_cast<int>(k));
    const auto quant = density.quantile_ensemble(static_cast<int>(k), cloud.size());
    gaps[k] = wasserstein(cloud, quant, p, OtMethod::exact1d);
  }
  return gaps;
}

}  // namespace mfvv
