#pragma once

#include "mfvv/forward.hpp"

namespace mfvv {

/// Cell-centered density on a uniform 1-D grid; one slice per time step.
struct GridDensity {
  double x_min = 0.0, x_max = 1.0;
  int n_x = 1;
  std::vector<Vec> slices;  // each of length n_x, nonnegative, sum * dx = 1

  double dx() const { return (x_max - x_min) / n_x; }
  double center(int i) const { return x_min + (i + 0.5) * dx(); }
  double mass(int k) const { return slices.at(k).sum() * dx(); }

  /// Midpoint-quadrature ensemble of one slice (cell centers, mass weights).
  ParticleEnsemble ensemble_at(int k) const;
  /// n equal-mass quantile atoms of one slice (midpoint rule on mass).
  ParticleEnsemble quantile_ensemble(int k, int n) const;

  /// Cell-averaged uniform density on [lo, hi].
  static GridDensity uniform_box(double lo, double hi, double x_min, double x_max, int n_x);
  /// Unit mass in the cell containing x0.
  static GridDensity delta(double x0, double x_min, double x_max, int n_x);
};

/// Conservative upwind advection plus explicit central diffusion with
/// zero-flux boundaries. The domain is padded to the Gronwall support
/// envelope plus the 6 sqrt(2 eps T) diffusion spread when the input domain
/// does not already cover it; the input slice is re-embedded at the same dx.
/// Throws CflViolation if dt (max|b+u|/dx + 2 eps/dx^2) > 0.9 at any step and
/// MassLoss if conservation drifts beyond 1e-6.
GridDensity pde_oracle_1d(const ProblemSpec& spec, const TimeGrid& grid,
                          const GridDensity& density0, double epsilon,
                          const ControlField& control);

/// Per-time W_p between the particle cloud and the grid density converted to
/// an equal-mass quantile ensemble of matching size.
std::vector<double> particle_vs_pde_gap(const ForwardPaths& paths, const GridDensity& density,
                                        int p);

}  // namespace mfvv
