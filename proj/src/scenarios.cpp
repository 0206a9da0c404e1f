#include <cmath>

#include "mfvv/problem.hpp"

namespace mfvv {

namespace {

double simpson(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  return (b - a) / 6.0 * (f(a) + 4.0 * f(c) + f(b));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double whole, double tol, int depth) {
  const double c = 0.5 * (a + b);
  const double left = simpson(f, a, c);
  const double right = simpson(f, c, b);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, a, c, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, c, b, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (b <= a) return 0.0;
  return adaptive_simpson(f, a, b, simpson(f, a, b), tol, 48);
}

double mollifier(double t) { return t <= 0.0 ? 0.0 : std::exp(-1.0 / t); }

double uniform_box_m2(const Vec& lo, const Vec& hi) {
  double acc = 0.0;
  for (int c = 0; c < lo.size(); ++c) {
    if (hi[c] > lo[c]) {
      acc += (std::pow(hi[c], 3) - std::pow(lo[c], 3)) / (3.0 * (hi[c] - lo[c]));
    } else {
      acc += lo[c] * lo[c];
    }
  }
  return acc;
}

}  // namespace

double flat_psi(double x) {
  const double w = std::abs(x) - 1.0;
  if (w <= 0.0) return 0.0;
  // Fubini collapses the double integral of the mollifier to one dimension.
  return integrate([w](double t) { return (w - t) * mollifier(t); }, 0.0, w, 1e-12);
}

double flat_psi_derivative(double x) {
  const double w = std::abs(x) - 1.0;
  if (w <= 0.0) return 0.0;
  const double slope = integrate(mollifier, 0.0, w, 1e-12);
  return x > 0.0 ? slope : -slope;
}

ProblemSpec make_lq_spec(const LqParams& p) {
  ProblemSpec spec;
  spec.dim = p.dim;
  spec.horizon = p.horizon;
  spec.lambda = p.lambda;
  spec.lip_const = p.lip_const;
  spec.growth_const = p.growth_const;
  spec.control_set = ControlSet::symmetric_box(p.dim, p.control_halfwidth);
  spec.control_radius = spec.control_set.radius_bound();
  spec.quadratic_control_cost = true;
  spec.name = p.mean_coupling == 0.0 ? "lq_1d" : "lq_meanfield_1d";

  const double a = p.a, b0 = p.b0, c = p.mean_coupling, q = p.q, qt = p.q_final, lam = p.lambda;
  const int d = p.dim;

  spec.drift = [a, b0, c, d](double, const Vec& x, const ParticleEnsemble& mu) -> Vec {
    return a * x + c * mu.mean() + Vec::Constant(d, b0);
  };
  spec.drift_grad_x = [a, d](double, const Vec&, const ParticleEnsemble&) -> Mat {
    return a * Mat::Identity(d, d);
  };
  spec.drift_dmu = [c, d](double, const Vec&, const ParticleEnsemble&, const Vec&) -> Mat {
    return c * Mat::Identity(d, d);
  };

  spec.running_cost = [q](double, const Vec& x, const ParticleEnsemble&) {
    return q * x.squaredNorm();
  };
  spec.running_cost_grad_x = [q](double, const Vec& x, const ParticleEnsemble&) -> Vec {
    return 2.0 * q * x;
  };
  spec.running_cost_dmu = [d](double, const Vec&, const ParticleEnsemble&, const Vec&) -> Vec {
    return Vec::Zero(d);
  };

  spec.control_cost = [lam](const Vec& alpha) { return lam * alpha.squaredNorm(); };
  spec.control_cost_grad = [lam](const Vec& alpha) -> Vec { return 2.0 * lam * alpha; };

  spec.final_cost = [qt](const Vec& x, const ParticleEnsemble&) { return qt * x.squaredNorm(); };
  spec.final_cost_grad_x = [qt](const Vec& x, const ParticleEnsemble&) -> Vec {
    return 2.0 * qt * x;
  };
  spec.final_cost_dmu = [d](const Vec&, const ParticleEnsemble&, const Vec&) -> Vec {
    return Vec::Zero(d);
  };

  spec.aggregates.drift_term = [c](double, const ParticleEnsemble& ens, const Mat& y) -> Mat {
    const Vec ybar = y.colwise().mean().transpose();
    return Vec::Ones(ens.size()) * (c * ybar).transpose();
  };
  spec.aggregates.running_term = [d](double, const ParticleEnsemble& ens) -> Mat {
    return Mat::Zero(ens.size(), d);
  };
  spec.aggregates.final_term = [d](const ParticleEnsemble& ens) -> Mat {
    return Mat::Zero(ens.size(), d);
  };

  const double lo = p.init_lo, hi = p.init_hi;
  spec.initial_measure.box_lo = Vec::Constant(d, lo);
  spec.initial_measure.box_hi = Vec::Constant(d, hi);
  spec.initial_measure.m2_analytic =
      uniform_box_m2(spec.initial_measure.box_lo, spec.initial_measure.box_hi);
  spec.initial_measure.draw = [lo, hi, d](RngStream& rng) -> Vec {
    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(lo, hi);
    return x;
  };
  return spec;
}

namespace {

ProblemSpec make_counterexample_spec() {
  ProblemSpec spec;
  spec.dim = 1;
  spec.horizon = 1.0;
  spec.lambda = 0.1;  // declared positive, fails validation: psi is flat on U
  spec.lip_const = 0.1;
  spec.growth_const = 1.0;
  spec.control_set = ControlSet::symmetric_box(1, 1.0);
  spec.control_radius = 1.0;
  spec.quadratic_control_cost = false;
  spec.name = "counterexample_flat_psi";

  spec.drift = [](double, const Vec& x, const ParticleEnsemble&) -> Vec {
    return Vec::Zero(x.size());
  };
  spec.drift_grad_x = [](double, const Vec&, const ParticleEnsemble&) -> Mat {
    return Mat::Zero(1, 1);
  };
  spec.drift_dmu = [](double, const Vec&, const ParticleEnsemble&, const Vec&) -> Mat {
    return Mat::Zero(1, 1);
  };
  spec.running_cost = [](double, const Vec&, const ParticleEnsemble&) { return 0.0; };
  spec.running_cost_grad_x = [](double, const Vec&, const ParticleEnsemble&) -> Vec {
    return Vec::Zero(1);
  };
  spec.running_cost_dmu = [](double, const Vec&, const ParticleEnsemble&, const Vec&) -> Vec {
    return Vec::Zero(1);
  };
  spec.control_cost = [](const Vec& alpha) { return flat_psi(alpha[0]); };
  spec.control_cost_grad = [](const Vec& alpha) -> Vec {
    Vec g(1);
    g[0] = flat_psi_derivative(alpha[0]);
    return g;
  };
  spec.final_cost = [](const Vec&, const ParticleEnsemble&) { return 0.0; };
  spec.final_cost_grad_x = [](const Vec&, const ParticleEnsemble&) -> Vec {
    return Vec::Zero(1);
  };
  spec.final_cost_dmu = [](const Vec&, const ParticleEnsemble&, const Vec&) -> Vec {
    return Vec::Zero(1);
  };

  spec.aggregates.drift_term = [](double, const ParticleEnsemble& ens, const Mat&) -> Mat {
    return Mat::Zero(ens.size(), 1);
  };
  spec.aggregates.running_term = [](double, const ParticleEnsemble& ens) -> Mat {
    return Mat::Zero(ens.size(), 1);
  };
  spec.aggregates.final_term = [](const ParticleEnsemble& ens) -> Mat {
    return Mat::Zero(ens.size(), 1);
  };

  spec.initial_measure.box_lo = Vec::Zero(1);
  spec.initial_measure.box_hi = Vec::Zero(1);
  spec.initial_measure.m2_analytic = 0.0;
  spec.initial_measure.draw = [](RngStream&) -> Vec { return Vec::Zero(1); };
  return spec;
}

}  // namespace

ProblemSpec builtin_scenario(const std::string& name) {
  if (name == "lq_1d") {
    LqParams p;
    p.a = -0.1;
    p.mean_coupling = 0.0;
    return make_lq_spec(p);
  }
  if (name == "lq_meanfield_1d") {
    LqParams p;
    p.a = -0.1;
    p.mean_coupling = 0.05;
    return make_lq_spec(p);
  }
  if (name == "counterexample_flat_psi") {
    return make_counterexample_spec();
  }
  throw UnknownScenario("unknown scenario '" + name + "'");
}

}  // namespace mfvv
