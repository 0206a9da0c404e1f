#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mfvv/ensemble.hpp"

namespace mfvv {

namespace {

constexpr double kMassEps = 1e-15;

double pair_cost(const Mat& x, const Mat& y, int i, int j, int p) {
  const double dist = (x.row(i) - y.row(j)).norm();
  return p == 1 ? dist : dist * dist;
}

struct SortedSupport {
  std::vector<int> order;
};

// Stable order: coordinate, then original index. Deterministic across runs.
SortedSupport sort_1d(const ParticleEnsemble& mu) {
  SortedSupport s;
  s.order.resize(mu.size());
  std::iota(s.order.begin(), s.order.end(), 0);
  const auto& pts = mu.points();
  std::sort(s.order.begin(), s.order.end(), [&](int a, int b) {
    if (pts(a, 0) != pts(b, 0)) return pts(a, 0) < pts(b, 0);
    return a < b;
  });
  return s;
}

// Exact 1-D OT by walking the merged quantile breakpoints of the two sorted
// weight sequences. Atoms are constant between breakpoints, so no
// interpolation error arises.
double exact_1d_cost(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p) {
  const auto sa = sort_1d(mu);
  const auto sb = sort_1d(nu);
  std::size_t ia = 0, ib = 0;
  double ra = mu.weights()[sa.order[0]];
  double rb = nu.weights()[sb.order[0]];
  double cost = 0.0;
  while (true) {
    const double m = std::min(ra, rb);
    if (m > 0.0) {
      const double dist = std::abs(mu.points()(sa.order[ia], 0) - nu.points()(sb.order[ib], 0));
      cost += m * (p == 1 ? dist : dist * dist);
    }
    ra -= m;
    rb -= m;
    const bool a_done = ia + 1 >= sa.order.size();
    const bool b_done = ib + 1 >= sb.order.size();
    if (ra <= kMassEps) {
      if (a_done) break;
      ra = mu.weights()[sa.order[++ia]];
    }
    if (rb <= kMassEps) {
      if (b_done) break;
      rb = nu.weights()[sb.order[++ib]];
    }
    if (ra <= kMassEps && ia + 1 >= sa.order.size() && rb <= kMassEps) break;
  }
  return cost;
}

// Successive shortest paths with potentials on the dense bipartite
// transportation graph. Exact up to floating point; terminates in at most
// N+M supply/demand saturations plus backward-arc events.
struct FlowSolver {
  const Mat* cost;  // N x M
  int n, m;
  std::vector<double> supply, demand;
  std::vector<std::vector<double>> flow;
  std::vector<double> pot_left, pot_right;

  double reduced(int i, int j) const {
    return std::max(0.0, (*cost)(i, j) + pot_left[i] - pot_right[j]);
  }
  double reduced_back(int j, int i) const {
    return std::max(0.0, -(*cost)(i, j) + pot_right[j] - pot_left[i]);
  }

  // One multi-source Dijkstra over the residual graph; returns the reached
  // demand node, or -1 when done.
  bool augment() {
    const double inf = std::numeric_limits<double>::infinity();
    const int v = n + m;
    std::vector<double> dist(v, inf);
    std::vector<int> prev(v, -1);
    std::vector<char> done(v, 0);
    for (int i = 0; i < n; ++i) {
      if (supply[i] > kMassEps) dist[i] = 0.0;
    }
    int target = -1;
    while (true) {
      int best = -1;
      double bd = inf;
      for (int k = 0; k < v; ++k) {
        if (!done[k] && dist[k] < bd) {
          bd = dist[k];
          best = k;
        }
      }
      if (best < 0) break;
      done[best] = 1;
      if (best >= n && demand[best - n] > kMassEps) {
        target = best - n;
        break;
      }
      if (best < n) {
        const int i = best;
        for (int j = 0; j < m; ++j) {
          const double nd = dist[best] + reduced(i, j);
          if (nd < dist[n + j]) {
            dist[n + j] = nd;
            prev[n + j] = best;
          }
        }
      } else {
        const int j = best - n;
        for (int i = 0; i < n; ++i) {
          if (flow[i][j] > kMassEps) {
            const double nd = dist[best] + reduced_back(j, i);
            if (nd < dist[i]) {
              dist[i] = nd;
              prev[i] = best;
            }
          }
        }
      }
    }
    if (target < 0) return false;

    // Trace the path, find the bottleneck, then push.
    double delta = demand[target];
    int node = n + target;
    while (prev[node] != -1) {
      const int pn = prev[node];
      if (node >= n) {
        // forward arc pn -> node: unlimited
      } else {
        delta = std::min(delta, flow[node][pn - n]);
      }
      node = pn;
    }
    delta = std::min(delta, supply[node]);

    node = n + target;
    while (prev[node] != -1) {
      const int pn = prev[node];
      if (node >= n) {
        flow[pn][node - n] += delta;
      } else {
        flow[node][pn - n] -= delta;
      }
      node = pn;
    }
    supply[node] -= delta;
    demand[target] -= delta;

    // Johnson potential update, capped at the target label so unsettled
    // (non-final) labels cannot break dual feasibility.
    const double dcap = dist[n + target];
    for (int i = 0; i < n; ++i) pot_left[i] += std::min(dist[i], dcap);
    for (int j = 0; j < m; ++j) pot_right[j] += std::min(dist[n + j], dcap);
    return true;
  }
};

TransportPlan lp_plan(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p) {
  const int n = mu.size();
  const int m = nu.size();
  Mat cost(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) cost(i, j) = pair_cost(mu.points(), nu.points(), i, j, p);
  }
  FlowSolver fs;
  fs.cost = &cost;
  fs.n = n;
  fs.m = m;
  fs.supply.assign(mu.weights().data(), mu.weights().data() + n);
  fs.demand.assign(nu.weights().data(), nu.weights().data() + m);
  fs.flow.assign(n, std::vector<double>(m, 0.0));
  fs.pot_left.assign(n, 0.0);
  fs.pot_right.assign(m, 0.0);

  const long cap = 64L * (n + m) + 4096;
  long rounds = 0;
  while (std::accumulate(fs.supply.begin(), fs.supply.end(), 0.0) > 1e-12) {
    if (!fs.augment()) break;
    if (++rounds > cap) throw Error("optimal transport flow solver exceeded iteration cap");
  }

  TransportPlan plan;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (fs.flow[i][j] > kMassEps) {
        plan.entries.push_back({i, j, fs.flow[i][j]});
        plan.cost += fs.flow[i][j] * cost(i, j);
      }
    }
  }
  return plan;
}

void require_compatible(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p) {
  if (mu.dim() != nu.dim()) throw DimensionMismatch("ensembles of different dimension");
  if (p != 1 && p != 2) throw Error("wasserstein order must be 1 or 2");
}

double default_eta(const Mat& x, const Mat& y, int p) {
  double cmax = 0.0;
  const int si = std::max<int>(1, static_cast<int>(x.rows()) / 64);
  const int sj = std::max<int>(1, static_cast<int>(y.rows()) / 64);
  for (int i = 0; i < x.rows(); i += si) {
    for (int j = 0; j < y.rows(); j += sj) {
      const double d = (x.row(i) - y.row(j)).norm();
      cmax = std::max(cmax, p == 1 ? d : d * d);
    }
  }
  return std::max(1e-12, 5e-3 * cmax);
}

}  // namespace

bool TransportPlan::marginals_ok(const Vec& a, const Vec& b, double tol) const {
  Vec row = Vec::Zero(a.size());
  Vec col = Vec::Zero(b.size());
  for (const auto& e : entries) {
    if (e.mass < 0.0) return false;
    row[e.i] += e.mass;
    col[e.j] += e.mass;
  }
  return (row - a).cwiseAbs().maxCoeff() <= tol && (col - b).cwiseAbs().maxCoeff() <= tol;
}

TransportPlan optimal_plan(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p) {
  require_compatible(mu, nu, p);
  if (static_cast<long>(mu.size()) * nu.size() > kLpPairBudget) {
    throw SizeLimit("lp transport exceeds the support-pair budget");
  }
  return lp_plan(mu, nu, p);
}

double wasserstein(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p,
                   OtMethod method) {
  require_compatible(mu, nu, p);
  switch (method) {
    case OtMethod::exact1d: {
      if (mu.dim() != 1) throw DimensionMismatch("exact1d requires dimension 1");
      const double c = exact_1d_cost(mu, nu, p);
      return p == 1 ? c : std::sqrt(c);
    }
    case OtMethod::lp: {
      const double c = optimal_plan(mu, nu, p).cost;
      return p == 1 ? c : std::sqrt(c);
    }
    case OtMethod::sinkhorn: {
      const double eta = default_eta(mu.points(), nu.points(), p);
      return sinkhorn_distance(mu, nu, p, eta).value;
    }
  }
  throw Error("unreachable wasserstein method");
}

SinkhornResult sinkhorn_distance(const ParticleEnsemble& mu, const ParticleEnsemble& nu,
                                 int p, double eta, int max_iter) {
  require_compatible(mu, nu, p);
  const int n = mu.size();
  const int m = nu.size();
  Mat cost(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) cost(i, j) = pair_cost(mu.points(), nu.points(), i, j, p);
  }
  const Vec log_a = mu.weights().array().max(1e-300).log();
  const Vec log_b = nu.weights().array().max(1e-300).log();

  // Scaled dual potentials; all updates in the log domain.
  Vec u = Vec::Zero(n), v = Vec::Zero(m);
  auto lse_rows = [&](const Vec& vv) {
    Vec out(n);
    for (int i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m; ++j) mx = std::max(mx, (vv[j] - cost(i, j)) / eta);
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += std::exp((vv[j] - cost(i, j)) / eta - mx);
      out[i] = mx + std::log(s);
    }
    return out;
  };
  auto lse_cols = [&](const Vec& uu) {
    Vec out(m);
    for (int j = 0; j < m; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i) mx = std::max(mx, (uu[i] - cost(i, j)) / eta);
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += std::exp((uu[i] - cost(i, j)) / eta - mx);
      out[j] = mx + std::log(s);
    }
    return out;
  };

  SinkhornResult res;
  res.eta = eta;
  int it = 0;
  for (; it < max_iter; ++it) {
    u = eta * (log_a - lse_rows(v)).array();
    v = eta * (log_b - lse_cols(u)).array();
    if (it % 10 == 9 || it == max_iter - 1) {
      Vec row = Vec::Zero(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) row[i] += std::exp((u[i] + v[j] - cost(i, j)) / eta);
      }
      if ((row - mu.weights()).cwiseAbs().sum() < 1e-10) break;
    }
  }
  res.iterations = it + 1;

  double value = 0.0;
  Vec row = Vec::Zero(n), col = Vec::Zero(m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double pij = std::exp((u[i] + v[j] - cost(i, j)) / eta);
      value += pij * cost(i, j);
      row[i] += pij;
      col[j] += pij;
    }
  }
  res.marginal_violation = std::max((row - mu.weights()).cwiseAbs().sum(),
                                    (col - nu.weights()).cwiseAbs().sum());
  res.value = p == 1 ? value : std::sqrt(std::max(0.0, value));
  return res;
}

double kantorovich_w1_lower_bound(const ParticleEnsemble& mu, const ParticleEnsemble& nu,
                                  const std::vector<Witness>& witnesses) {
  // Pool both supports, then check every witness on a deterministic pair sample.
  Mat pool(mu.size() + nu.size(), mu.dim());
  pool.topRows(mu.size()) = mu.points();
  pool.bottomRows(nu.size()) = nu.points();
  const int np = static_cast<int>(pool.rows());
  const long budget = 4096;
  const long total = static_cast<long>(np) * (np - 1) / 2;
  const long stride = std::max(1L, total / budget);

  for (std::size_t w = 0; w < witnesses.size(); ++w) {
    long counter = 0;
    for (int i = 0; i < np; ++i) {
      for (int j = i + 1; j < np; ++j) {
        if (counter++ % stride != 0) continue;
        const Vec xi = pool.row(i).transpose();
        const Vec xj = pool.row(j).transpose();
        const double gap = (xi - xj).norm();
        if (gap < 1e-14) continue;
        const double diff = std::abs(witnesses[w](xi) - witnesses[w](xj));
        if (diff > gap * (1.0 + 1e-8) + 1e-14) {
          throw WitnessNotLipschitz("witness " + std::to_string(w) + " exceeds Lipschitz 1");
        }
      }
    }
  }

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& phi : witnesses) {
    double val = 0.0;
    for (int i = 0; i < mu.size(); ++i) val += mu.weights()[i] * phi(mu.point(i));
    for (int j = 0; j < nu.size(); ++j) val -= nu.weights()[j] * phi(nu.point(j));
    best = std::max(best, val);
  }
  if (witnesses.empty()) best = 0.0;
  return best;
}

double sup_wasserstein_path(const std::vector<ParticleEnsemble>& path_a,
                            const std::vector<ParticleEnsemble>& path_b, int p) {
  if (path_a.size() != path_b.size() || path_a.empty()) {
    throw GridMismatch("paths must share the time grid");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < path_a.size(); ++k) {
    const auto& a = path_a[k];
    const auto& b = path_b[k];
    if (a.dim() != b.dim()) throw GridMismatch("paths must share the dimension");
    OtMethod method = OtMethod::sinkhorn;
    if (a.dim() == 1) {
      method = OtMethod::exact1d;
    } else if (static_cast<long>(a.size()) * b.size() <= 250'000) {
      method = OtMethod::lp;
    }
    worst = std::max(worst, wasserstein(a, b, p, method));
  }
  return worst;
}

}  // namespace mfvv
