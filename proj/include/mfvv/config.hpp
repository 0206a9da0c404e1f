#pragma once

#include <optional>
#include <string>

#include "mfvv/sweep.hpp"

namespace mfvv {

/// Parsed run configuration (JSON file). Unknown keys are a hard error.
struct RunConfig {
  std::string scenario;  // builtin name; empty when a custom block is given
  std::optional<LqParams> custom;
  ControlSet::Kind custom_control_kind = ControlSet::Kind::box;

  int n_steps = 64;
  int n_particles = 1024;
  std::vector<double> eps_ladder = {0.25};
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int dump_every = 0;
  SolverOptions solver;

  ProblemSpec make_spec() const;
};

/// Loads and validates a config file; MFVV_SEED in the environment overrides
/// the configured seed.
RunConfig load_config(const std::string& path);

}  // namespace mfvv
