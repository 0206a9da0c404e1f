#pragma once

#include "mfvv/ensemble.hpp"

namespace mfvv {

struct RegressionConfig {
  int basis_degree = 3;     // total polynomial degree
  double ridge = 1e-8;      // fallback penalty when the fit is singular
};

/// Global least-squares polynomial fit on standardized coordinates.
/// Conditional expectations in the backward pass and the decoupling field
/// both run through this.
class PolynomialFit {
 public:
  /// Fits one model per target column. Falls back to ridge when the design
  /// is rank-deficient and records that in ridged().
  PolynomialFit(const Mat& x, const Mat& targets, const RegressionConfig& cfg);

  Vec evaluate(const Vec& x) const;
  Mat evaluate_all(const Mat& x) const;
  bool ridged() const { return ridged_; }
  int basis_size() const { return static_cast<int>(coef_.rows()); }

  /// Derivative of output column `out` w.r.t. input coordinate `in` at x.
  double derivative(const Vec& x, int out, int in) const;

  /// Evaluation clamps x to this box (fitted cloud bounds plus margin) so the
  /// polynomial never extrapolates wildly off-cloud.
  const Vec& clamp_lo() const { return lo_; }
  const Vec& clamp_hi() const { return hi_; }

 private:
  Vec features(const Vec& x) const;

  std::vector<std::vector<int>> exponents_;
  Vec shift_, scale_;
  Vec lo_, hi_;
  Mat coef_;  // basis_size x n_targets
  bool ridged_ = false;
};

/// Multivariate monomial exponents of total degree <= degree.
std::vector<std::vector<int>> monomial_exponents(int dim, int degree);

}  // namespace mfvv
