#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mfvv/errors.hpp"

namespace mfvv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// An empirical probability measure: N weighted atoms in R^d.
/// Immutable after construction; mean and second moment are precomputed so
/// mean-field callbacks can read them in O(1).
class ParticleEnsemble {
 public:
  /// Equal weights 1/N.
  explicit ParticleEnsemble(Mat points);
  ParticleEnsemble(Mat points, Vec weights);

  int size() const { return static_cast<int>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  const Mat& points() const { return points_; }
  const Vec& weights() const { return weights_; }
  Vec point(int i) const { return points_.row(i).transpose(); }

  const Vec& mean() const { return mean_; }
  /// Weighted second moment sum w_i |x_i|^2.
  double second_moment() const { return m2_; }

 private:
  Mat points_;   // N x d
  Vec weights_;  // N, nonnegative, sums to 1
  Vec mean_;
  double m2_ = 0.0;
};

/// Weighted p-th moment sum w_i |x_i|^p, p >= 1.
double moment(const ParticleEnsemble& mu, double p);

enum class OtMethod { exact1d, lp, sinkhorn };

/// N*M support pairs allowed for the exact LP route.
inline constexpr long kLpPairBudget = 1'000'000;

double wasserstein(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p,
                   OtMethod method);

struct SinkhornResult {
  double value = 0.0;            // W_p estimate from the entropic plan
  double marginal_violation = 0.0;  // max L1 deviation of the plan's marginals
  double eta = 0.0;
  int iterations = 0;
};

SinkhornResult sinkhorn_distance(const ParticleEnsemble& mu, const ParticleEnsemble& nu,
                                 int p, double eta, int max_iter = 2000);

/// Discrete optimal transport plan in coordinate form.
struct TransportPlan {
  struct Entry {
    int i, j;
    double mass;
  };
  std::vector<Entry> entries;
  double cost = 0.0;  // sum mass * |x_i - y_j|^p

  /// Checks that both marginals match the given weights within tol.
  bool marginals_ok(const Vec& a, const Vec& b, double tol = 1e-9) const;
};

/// Exact optimal plan for |x-y|^p cost (min-cost-flow route, any weights).
TransportPlan optimal_plan(const ParticleEnsemble& mu, const ParticleEnsemble& nu, int p);

using Witness = std::function<double(const Vec&)>;

/// Kantorovich-Rubinstein lower bound: max_phi integral of phi d(mu - nu)
/// over the supplied 1-Lipschitz witnesses. Always <= W1.
double kantorovich_w1_lower_bound(const ParticleEnsemble& mu, const ParticleEnsemble& nu,
                                  const std::vector<Witness>& witnesses);

/// Max over matched grid times of W_p; method auto-selected per pair.
double sup_wasserstein_path(const std::vector<ParticleEnsemble>& path_a,
                            const std::vector<ParticleEnsemble>& path_b, int p);

}  // namespace mfvv
