#include "mfvv/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

namespace mfvv {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");

  reject_unknown_keys(j,
                      {"scenario", "custom", "grid", "n_particles", "eps_ladder", "seed",
                       "output_dir", "dump_every", "solver"},
                      "config root");

  RunConfig cfg;
  try {
    if (j.contains("scenario") && j.contains("custom")) {
      throw ConfigError("config must give either 'scenario' or 'custom', not both");
    }
    if (j.contains("scenario")) {
      cfg.scenario = j.at("scenario").get<std::string>();
    } else if (j.contains("custom")) {
      const json& c = j.at("custom");
      reject_unknown_keys(c, {"dim", "horizon", "lambda", "L", "M", "control_set", "lq"},
                          "custom block");
      LqParams p;
      if (c.contains("dim")) p.dim = c.at("dim").get<int>();
      if (c.contains("horizon")) p.horizon = c.at("horizon").get<double>();
      if (c.contains("lambda")) p.lambda = c.at("lambda").get<double>();
      if (c.contains("L")) p.lip_const = c.at("L").get<double>();
      if (c.contains("M")) p.growth_const = c.at("M").get<double>();
      if (c.contains("control_set")) {
        const json& cs = c.at("control_set");
        reject_unknown_keys(cs, {"kind", "radius"}, "control_set block");
        const std::string kind = cs.value("kind", "box");
        if (kind == "box") {
          cfg.custom_control_kind = ControlSet::Kind::box;
        } else if (kind == "ball") {
          cfg.custom_control_kind = ControlSet::Kind::ball;
        } else {
          throw ConfigError("control_set.kind must be 'box' or 'ball'");
        }
        if (cs.contains("radius")) p.control_halfwidth = cs.at("radius").get<double>();
      }
      if (c.contains("lq")) {
        const json& lq = c.at("lq");
        reject_unknown_keys(lq, {"A", "B", "Q", "QT", "mean_coupling"}, "lq block");
        if (lq.contains("A")) p.a = lq.at("A").get<double>();
        if (lq.contains("B")) p.b0 = lq.at("B").get<double>();
        if (lq.contains("Q")) p.q = lq.at("Q").get<double>();
        if (lq.contains("QT")) p.q_final = lq.at("QT").get<double>();
        if (lq.contains("mean_coupling")) p.mean_coupling = lq.at("mean_coupling").get<double>();
      }
      cfg.custom = p;
    } else {
      throw ConfigError("config needs a 'scenario' or a 'custom' block");
    }

    if (j.contains("grid")) {
      reject_unknown_keys(j.at("grid"), {"n_steps"}, "grid block");
      cfg.n_steps = j.at("grid").value("n_steps", cfg.n_steps);
    }
    cfg.n_particles = j.value("n_particles", cfg.n_particles);
    if (j.contains("eps_ladder")) {
      cfg.eps_ladder = j.at("eps_ladder").get<std::vector<double>>();
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.dump_every = j.value("dump_every", cfg.dump_every);
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      reject_unknown_keys(s, {"tol", "max_picard", "continuation", "basis_degree", "damping"},
                          "solver block");
      cfg.solver.tol = s.value("tol", cfg.solver.tol);
      cfg.solver.max_picard = s.value("max_picard", cfg.solver.max_picard);
      cfg.solver.continuation = s.value("continuation", cfg.solver.continuation);
      cfg.solver.regression.basis_degree =
          s.value("basis_degree", cfg.solver.regression.basis_degree);
      cfg.solver.damping = s.value("damping", cfg.solver.damping);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }

  if (cfg.n_steps < 1) throw ConfigError("grid.n_steps must be positive");
  if (cfg.n_particles < 1) throw ConfigError("n_particles must be positive");
  if (cfg.dump_every < 0) throw ConfigError("dump_every must be nonnegative");
  if (cfg.eps_ladder.empty()) throw ConfigError("eps_ladder must be nonempty");
  for (std::size_t i = 0; i < cfg.eps_ladder.size(); ++i) {
    if (cfg.eps_ladder[i] <= 0.0) throw ConfigError("eps_ladder entries must be positive");
    if (i > 0 && cfg.eps_ladder[i] >= cfg.eps_ladder[i - 1]) {
      throw ConfigError("eps_ladder must be strictly decreasing");
    }
  }

  if (const char* env = std::getenv("MFVV_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  return cfg;
}

ProblemSpec RunConfig::make_spec() const {
  if (!scenario.empty()) return builtin_scenario(scenario);
  ProblemSpec spec = make_lq_spec(*custom);
  spec.name = "custom_lq";
  if (custom_control_kind == ControlSet::Kind::ball) {
    spec.control_set = ControlSet::ball(Vec::Zero(custom->dim), custom->control_halfwidth);
    spec.control_radius = spec.control_set.radius_bound();
  }
  return spec;
}

}  // namespace mfvv
