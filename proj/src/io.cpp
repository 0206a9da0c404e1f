#include "mfvv/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mfvv {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

json record_json(const EpsRecord& r) {
  json j;
  j["epsilon"] = r.epsilon;
  j["cost"] = r.cost;
  j["cost_std_error"] = r.cost_std_error;
  j["sup_w2_to_limit"] = r.sup_w2_to_limit;
  j["control_l2_gap_to_limit"] = r.control_l2_gap_to_limit;
  j["control_lip_estimate"] = r.control_lip_estimate;
  j["picard_iters"] = r.picard_iters;
  j["converged"] = r.converged;
  j["bound_checks"] = {{"adjoint_bound_ok", r.adjoint_bound_ok},
                       {"second_moment_ok", r.second_moment_ok},
                       {"max_abs_y", r.max_abs_y}};
  if (!r.test_field_pairings.empty()) j["test_field_pairings"] = r.test_field_pairings;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string row;
  for (const auto& c : cells) {
    if (!row.empty()) row += ',';
    row += c;
  }
  row += '\n';
  return row;
}

}  // namespace

std::string sweep_report_json(const SweepReport& report) {
  json j;
  j["seed"] = report.seed;
  j["n_particles"] = report.n_particles;
  j["n_steps"] = report.n_steps;
  j["records"] = json::array();
  for (const auto& r : report.records) j["records"].push_back(record_json(r));
  j["limit"] = record_json(report.limit);
  j["verdicts"] = {{"w2_trend_ok", report.w2_trend_ok},
                   {"control_gap_trend_ok", report.control_gap_trend_ok},
                   {"cost_order_ok", report.cost_order_ok},
                   {"all_converged", report.all_converged}};
  return j.dump(2) + "\n";
}

std::string sweep_report_csv(const SweepReport& report) {
  std::string out = "epsilon,cost,sup_w2,control_l2_gap,control_lip,picard_iters\n";
  auto row = [](const EpsRecord& r) {
    return csv_row({format_double(r.epsilon), format_double(r.cost),
                    format_double(r.sup_w2_to_limit), format_double(r.control_l2_gap_to_limit),
                    format_double(r.control_lip_estimate), std::to_string(r.picard_iters)});
  };
  for (const auto& r : report.records) out += row(r);
  out += row(report.limit);
  return out;
}

std::string counterexample_report_json(const CounterexampleReport& report) {
  json j;
  j["seed"] = report.seed;
  j["n_particles"] = report.n_particles;
  j["n_steps"] = report.n_steps;
  j["floor"] = report.floor;
  j["statistically_sufficient"] = report.statistically_sufficient;
  j["records"] = json::array();
  for (const auto& r : report.records) {
    j["records"].push_back({{"epsilon", r.epsilon},
                            {"cost", r.cost},
                            {"divergence", r.divergence},
                            {"reflection_w1", r.reflection_w1},
                            {"floor_ok", r.floor_ok},
                            {"symmetry_ok", r.symmetry_ok}});
  }
  j["verdicts"] = {{"floor_verdict", report.floor_verdict},
                   {"symmetry_verdict", report.symmetry_verdict}};
  return j.dump(2) + "\n";
}

std::string counterexample_report_csv(const CounterexampleReport& report) {
  std::string out = "epsilon,cost,divergence,reflection_w1,floor_ok,symmetry_ok\n";
  for (const auto& r : report.records) {
    out += csv_row({format_double(r.epsilon), format_double(r.cost),
                    format_double(r.divergence), format_double(r.reflection_w1),
                    r.floor_ok ? "1" : "0", r.symmetry_ok ? "1" : "0"});
  }
  return out;
}

std::string solve_report_json(const SolveReport& report) {
  json j;
  j["converged"] = report.converged;
  j["picard_iters"] = report.picard_iters;
  j["residual_history"] = report.residual_history;
  j["max_abs_y"] = report.max_abs_y;
  j["adjoint_bound"] = report.adjoint_bound;
  j["adjoint_bound_ok"] = report.adjoint_bound_ok;
  j["second_moment"] = {{"observed", report.second_moment.observed},
                        {"bound", report.second_moment.bound},
                        {"ok", report.second_moment.ok()}};
  j["constants"] = {{"C1", report.constants.c1},
                    {"C2", report.constants.c2},
                    {"C3", report.constants.c3},
                    {"C4", report.constants.c4},
                    {"Lambda", report.constants.lambda_threshold}};
  j["regression_ridged"] = report.regression_ridged;
  j["admissibility_warning"] = report.admissibility_warning;
  if (report.rungs > 0) {
    j["continuation"] = {{"delta0", report.delta0}, {"rungs", report.rungs}};
  }
  return j.dump(2) + "\n";
}

std::string validation_report_json(const ValidationReport& report, const Constants& consts,
                                   double gap) {
  json j;
  j["passed"] = report.passed();
  j["checks"] = json::array();
  for (const auto& c : report.checks) {
    j["checks"].push_back(
        {{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}, {"detail", c.detail}});
  }
  j["constants"] = {{"C1", consts.c1},
                    {"C2", consts.c2},
                    {"C3", consts.c3},
                    {"C4", consts.c4},
                    {"Lambda", consts.lambda_threshold}};
  j["admissibility_gap"] = gap;
  return j.dump(2) + "\n";
}

std::string ensemble_snapshot(const ParticleEnsemble& ensemble, double t) {
  std::string out = std::to_string(ensemble.dim()) + " " + std::to_string(ensemble.size()) +
                    " " + format_double(t) + "\n";
  for (int i = 0; i < ensemble.size(); ++i) {
    for (int c = 0; c < ensemble.dim(); ++c) {
      out += format_double(ensemble.points()(i, c)) + " ";
    }
    out += format_double(ensemble.weights()[i]) + "\n";
  }
  return out;
}

ParticleEnsemble read_ensemble_snapshot(const std::string& text) {
  std::istringstream in(text);
  int d = 0, n = 0;
  double t = 0.0;
  if (!(in >> d >> n >> t) || d < 1 || n < 1) throw Error("bad ensemble snapshot header");
  Mat pts(n, d);
  Vec w(n);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) {
      if (!(in >> pts(i, c))) throw Error("bad ensemble snapshot row");
    }
    if (!(in >> w[i])) throw Error("bad ensemble snapshot weight");
  }
  return ParticleEnsemble(std::move(pts), std::move(w));
}

std::string grid_density_table(const GridDensity& density, const TimeGrid& grid) {
  std::string out;
  for (std::size_t k = 0; k < density.slices.size(); ++k) {
    out += format_double(grid.time(static_cast<int>(k)));
    for (int i = 0; i < density.n_x; ++i) out += " " + format_double(density.slices[k][i]);
    out += "\n";
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

}  // namespace mfvv
