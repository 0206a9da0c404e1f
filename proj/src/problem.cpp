#include "mfvv/problem.hpp"

#include <cmath>
#include <sstream>

namespace mfvv {

ControlSet ControlSet::box(Vec center, Vec halfwidths) {
  if ((halfwidths.array() <= 0.0).any()) throw Error("box halfwidths must be positive");
  ControlSet s;
  s.kind_ = Kind::box;
  s.center_ = std::move(center);
  s.halfwidths_ = std::move(halfwidths);
  return s;
}

ControlSet ControlSet::ball(Vec center, double radius) {
  if (radius <= 0.0) throw Error("ball radius must be positive");
  ControlSet s;
  s.kind_ = Kind::ball;
  s.center_ = std::move(center);
  s.radius_ = radius;
  return s;
}

ControlSet ControlSet::symmetric_box(int dim, double r) {
  return box(Vec::Zero(dim), Vec::Constant(dim, r));
}

Vec ControlSet::project(const Vec& y) const {
  if (y.size() != center_.size()) throw DimensionMismatch("control projection dimension");
  if (kind_ == Kind::box) {
    return y.cwiseMax(center_ - halfwidths_).cwiseMin(center_ + halfwidths_);
  }
  const Vec delta = y - center_;
  const double norm = delta.norm();
  if (norm <= radius_) return y;
  return center_ + delta * (radius_ / norm);
}

bool ControlSet::contains(const Vec& y, double tol) const {
  return (project(y) - y).norm() <= tol;
}

double ControlSet::radius_bound() const {
  double sup = 0.0;
  if (kind_ == Kind::ball) {
    sup = center_.norm() + radius_;
  } else {
    // The norm over a box is maximized at a vertex; per coordinate the
    // farther face from the origin wins.
    double acc = 0.0;
    for (int i = 0; i < center_.size(); ++i) {
      const double far_face = std::max(std::abs(center_[i] - halfwidths_[i]),
                                       std::abs(center_[i] + halfwidths_[i]));
      acc += far_face * far_face;
    }
    sup = std::sqrt(acc);
  }
  return std::max(1.0, sup);
}

double ProblemSpec::m2_mu0(std::uint64_t seed, int n_draws) const {
  if (initial_measure.m2_analytic >= 0.0) return initial_measure.m2_analytic;
  RngStream rng(seed, "m2-estimate");
  double acc = 0.0;
  for (int i = 0; i < n_draws; ++i) acc += initial_measure.draw(rng).squaredNorm();
  return acc / n_draws;
}

bool ValidationReport::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

std::string ValidationReport::first_failure() const {
  for (const auto& c : checks) {
    if (!c.passed) return c.name;
  }
  return {};
}

namespace {

constexpr double kRatioTol = 1e-6;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-5;

double finite_or_throw(double v, const char* who) {
  if (!std::isfinite(v)) throw NonFiniteEvaluation(std::string(who) + " returned a non-finite value");
  return v;
}

void finite_or_throw(const Vec& v, const char* who) {
  if (!v.allFinite()) throw NonFiniteEvaluation(std::string(who) + " returned a non-finite value");
}

void finite_or_throw(const Mat& v, const char* who) {
  if (!v.allFinite()) throw NonFiniteEvaluation(std::string(who) + " returned a non-finite value");
}

Vec probe_point(RngStream& rng, int dim, double scale) {
  Vec x(dim);
  for (int i = 0; i < dim; ++i) x[i] = rng.uniform(-scale, scale);
  return x;
}

ParticleEnsemble probe_ensemble(RngStream& rng, int dim, int n, double scale) {
  Mat pts(n, dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) pts(i, j) = rng.uniform(-scale, scale);
  }
  return ParticleEnsemble(std::move(pts));
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// Empirical Lipschitz ratio of the drift over random (x, mu) pairs.
CheckResult check_drift_lipschitz(const ProblemSpec& spec, int n_probe, RngStream& rng) {
  CheckResult r{"drift-lipschitz", true, 0.0, ""};
  for (int k = 0; k < n_probe; ++k) {
    const double t = rng.uniform(0.0, spec.horizon);
    const Vec x = probe_point(rng, spec.dim, 2.0);
    const Vec y = probe_point(rng, spec.dim, 2.0);
    const auto mu = probe_ensemble(rng, spec.dim, 12, 2.0);
    const auto nu = probe_ensemble(rng, spec.dim, 12, 2.0);
    const double denom = (x - y).norm() + wasserstein(mu, nu, 2, spec.dim == 1 ? OtMethod::exact1d : OtMethod::lp);
    if (denom < 1e-12) continue;
    const Vec bx = spec.drift(t, x, mu);
    const Vec by = spec.drift(t, y, nu);
    finite_or_throw(bx, "drift");
    finite_or_throw(by, "drift");
    r.worst = std::max(r.worst, (bx - by).norm() / denom);
  }
  if (r.worst > spec.lip_const * (1.0 + kRatioTol)) {
    r.passed = false;
    r.detail = "observed ratio exceeds declared L";
  }
  return r;
}

// lambda-convexity of the control cost over pairs in U.
CheckResult check_lambda_convexity(const ProblemSpec& spec, int n_probe, RngStream& rng) {
  CheckResult r{"psi-lambda-convexity", true, 0.0, ""};
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_probe; ++k) {
    const Vec a = spec.control_set.project(probe_point(rng, spec.dim, spec.control_radius));
    const Vec b = spec.control_set.project(probe_point(rng, spec.dim, spec.control_radius));
    const double gap2 = (b - a).squaredNorm();
    if (gap2 < 1e-16) continue;
    const double lhs = finite_or_throw(spec.control_cost(b), "control_cost") -
                       finite_or_throw(spec.control_cost(a), "control_cost") -
                       spec.control_cost_grad(a).dot(b - a);
    worst_margin = std::min(worst_margin, lhs / gap2);
  }
  r.worst = worst_margin;
  if (worst_margin < spec.lambda * (1.0 - kRatioTol)) {
    r.passed = false;
    r.detail = "lambda-convexity violated";
  }
  return r;
}

// Central finite differences against every supplied gradient and kernel.
// Perturbing one particle of an empirical cloud probes the measure kernels.
CheckResult check_gradients(const ProblemSpec& spec, int n_probe, RngStream& rng) {
  CheckResult r{"gradient-consistency", true, 0.0, ""};
  const int reps = std::max(8, n_probe / 16);
  const int m = 8;  // cloud size for kernel probes
  for (int k = 0; k < reps; ++k) {
    const double t = rng.uniform(0.0, spec.horizon);
    const Vec x = probe_point(rng, spec.dim, 1.0);
    auto mu = probe_ensemble(rng, spec.dim, m, 1.0);

    // state gradients
    const Mat gb = spec.drift_grad_x(t, x, mu);
    finite_or_throw(gb, "drift_grad_x");
    const Vec gf = spec.running_cost_grad_x(t, x, mu);
    const Vec gg = spec.final_cost_grad_x(x, mu);
    const Vec alpha = spec.control_set.project(probe_point(rng, spec.dim, spec.control_radius));
    const Vec gpsi = spec.control_cost_grad(alpha);
    for (int c = 0; c < spec.dim; ++c) {
      Vec xp = x, xm = x;
      xp[c] += kGradStep;
      xm[c] -= kGradStep;
      const Vec db = (spec.drift(t, xp, mu) - spec.drift(t, xm, mu)) / (2 * kGradStep);
      r.worst = std::max(r.worst, (db - gb.col(c)).cwiseAbs().maxCoeff() /
                                      std::max(1.0, gb.col(c).cwiseAbs().maxCoeff()));
      const double df = (spec.running_cost(t, xp, mu) - spec.running_cost(t, xm, mu)) / (2 * kGradStep);
      r.worst = std::max(r.worst, rel_err(df, gf[c]));
      const double dg = (spec.final_cost(xp, mu) - spec.final_cost(xm, mu)) / (2 * kGradStep);
      r.worst = std::max(r.worst, rel_err(dg, gg[c]));
      Vec ap = alpha, am = alpha;
      ap[c] += kGradStep;
      am[c] -= kGradStep;
      const double dpsi = (spec.control_cost(ap) - spec.control_cost(am)) / (2 * kGradStep);
      r.worst = std::max(r.worst, rel_err(dpsi, gpsi[c]));
    }

    // measure kernels: move particle j of the cloud in coordinate c
    const int j = static_cast<int>(rng.index(m));
    const Vec xj = mu.point(j);
    for (int c = 0; c < spec.dim; ++c) {
      Mat pts_p = mu.points(), pts_m = mu.points();
      pts_p(j, c) += kGradStep;
      pts_m(j, c) -= kGradStep;
      ParticleEnsemble mup(pts_p), mum(pts_m);
      const Vec db = (spec.drift(t, x, mup) - spec.drift(t, x, mum)) / (2 * kGradStep);
      const Mat kb = spec.drift_dmu(t, x, mu, xj);
      finite_or_throw(kb, "drift_dmu");
      r.worst = std::max(r.worst, (db - kb.col(c) / m).cwiseAbs().maxCoeff() /
                                      std::max(1.0, kb.cwiseAbs().maxCoeff()));
      const double df = (spec.running_cost(t, x, mup) - spec.running_cost(t, x, mum)) / (2 * kGradStep);
      const Vec kf = spec.running_cost_dmu(t, x, mu, xj);
      r.worst = std::max(r.worst, std::abs(df - kf[c] / m) / std::max(1.0, kf.cwiseAbs().maxCoeff()));
      const double dg = (spec.final_cost(x, mup) - spec.final_cost(x, mum)) / (2 * kGradStep);
      const Vec kg = spec.final_cost_dmu(x, mu, xj);
      r.worst = std::max(r.worst, std::abs(dg - kg[c] / m) / std::max(1.0, kg.cwiseAbs().maxCoeff()));
    }
  }
  if (r.worst > kGradRelTol) {
    r.passed = false;
    r.detail = "finite-difference mismatch";
  }
  return r;
}

CheckResult check_structure(const ProblemSpec& spec) {
  CheckResult r{"structure", true, 0.0, ""};
  auto fail = [&](const std::string& why) {
    r.passed = false;
    r.detail = why;
  };
  if (spec.dim < 1) fail("dim must be >= 1");
  if (spec.horizon <= 0.0) fail("horizon must be positive");
  if (spec.lambda <= 0.0) fail("lambda must be positive");
  if (spec.lip_const <= 0.0) fail("L must be positive");
  if (spec.growth_const <= 0.0) fail("M must be positive");
  if (spec.control_radius < 1.0) fail("control radius must be >= 1");
  if (spec.control_radius < spec.control_set.radius_bound() * (1.0 - 1e-12)) {
    fail("control radius below sup |u| over U");
  }
  return r;
}

CheckResult check_initial_support(const ProblemSpec& spec, int n_probe, RngStream& rng) {
  CheckResult r{"initial-support", true, 0.0, ""};
  const auto& im = spec.initial_measure;
  if (im.box_lo.size() != spec.dim || im.box_hi.size() != spec.dim) {
    r.passed = false;
    r.detail = "support box dimension mismatch";
    return r;
  }
  for (int k = 0; k < n_probe; ++k) {
    const Vec x = im.draw(rng);
    finite_or_throw(x, "initial_measure");
    for (int c = 0; c < spec.dim; ++c) {
      const double overshoot = std::max(im.box_lo[c] - x[c], x[c] - im.box_hi[c]);
      r.worst = std::max(r.worst, overshoot);
    }
  }
  if (r.worst > 1e-12) {
    r.passed = false;
    r.detail = "sample escaped the declared support box";
  }
  return r;
}

}  // namespace

ValidationReport validate_spec(const ProblemSpec& spec, int n_probe, std::uint64_t seed) {
  if (n_probe < 100) throw Error("validate_spec needs n_probe >= 100");
  RngStream rng(seed, "validate-probes");
  ValidationReport report;
  report.checks.push_back(check_structure(spec));
  report.checks.push_back(check_drift_lipschitz(spec, n_probe, rng));
  report.checks.push_back(check_lambda_convexity(spec, n_probe, rng));
  report.checks.push_back(check_gradients(spec, n_probe, rng));
  report.checks.push_back(check_initial_support(spec, n_probe, rng));
  return report;
}

void require_valid(const ProblemSpec& spec, int n_probe, std::uint64_t seed) {
  const auto report = validate_spec(spec, n_probe, seed);
  if (!report.passed()) {
    throw RejectedSpec("spec '" + spec.name + "' rejected: " + report.first_failure());
  }
}

double admissibility_gap(const ProblemSpec& spec) {
  return spec.lambda - lambda_threshold(spec.horizon, spec.lip_const);
}

double constant_c1(double T, double m2_mu0, double M, double R) {
  const double base = (M + R) / (M + 1.0) + std::sqrt(m2_mu0 + T);
  return base * base * std::exp((M + 1.0) * T);
}

double constant_c2(double T, double L) { return std::exp((4.0 * L + 1.0) * T); }

double constant_c3(double T, double L) { return (1.0 + 2.0 * L) * std::exp(2.0 * L * T); }

double constant_c4(double T, double L) {
  const double c3 = constant_c3(T, L);
  return 4.0 * L * L * (2.0 + T + T * c3 * c3) * std::exp((6.0 + 2.0 * L * L) * T);
}

double lambda_threshold(double T, double L) {
  return T * L * (1.0 + 2.0 * L) * std::exp((6.0 * L + 1.0) * T);
}

}  // namespace mfvv
