#pragma once

#include <string>

#include "mfvv/pde1d.hpp"
#include "mfvv/sweep.hpp"

namespace mfvv {

/// Fixed-width float formatting shared by every writer so identical runs
/// produce byte-identical files.
std::string format_double(double v);

std::string sweep_report_json(const SweepReport& report);
/// Flat table; header fixed:
/// epsilon,cost,sup_w2,control_l2_gap,control_lip,picard_iters
/// One row per ladder entry plus the eps = 0 limit row.
std::string sweep_report_csv(const SweepReport& report);

std::string counterexample_report_json(const CounterexampleReport& report);
/// Header: epsilon,cost,divergence,reflection_w1,floor_ok,symmetry_ok
std::string counterexample_report_csv(const CounterexampleReport& report);

std::string solve_report_json(const SolveReport& report);
std::string validation_report_json(const ValidationReport& report, const Constants& consts,
                                   double gap);

/// Ensemble snapshot: one-line header "d N t" then N rows of d coordinates
/// and the weight.
std::string ensemble_snapshot(const ParticleEnsemble& ensemble, double t);
ParticleEnsemble read_ensemble_snapshot(const std::string& text);

/// PDE dump: one row per time step, columns are the grid values.
std::string grid_density_table(const GridDensity& density, const TimeGrid& grid);

void write_file(const std::string& path, const std::string& content);

}  // namespace mfvv
