#include "mfvv/regression.hpp"

#include <Eigen/QR>
#include <cmath>

namespace mfvv {

std::vector<std::vector<int>> monomial_exponents(int dim, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(dim, 0);
  // Lexicographic enumeration with a total-degree cap.
  std::function<void(int, int)> rec = [&](int pos, int remaining) {
    if (pos == dim) {
      out.push_back(current);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      current[pos] = e;
      rec(pos + 1, remaining - e);
    }
    current[pos] = 0;
  };
  rec(0, degree);
  return out;
}

PolynomialFit::PolynomialFit(const Mat& x, const Mat& targets, const RegressionConfig& cfg) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  if (targets.rows() != n) throw DimensionMismatch("regression rows mismatch");

  exponents_ = monomial_exponents(d, cfg.basis_degree);
  shift_ = x.colwise().mean().transpose();
  scale_.resize(d);
  for (int c = 0; c < d; ++c) {
    const double sd = std::sqrt((x.col(c).array() - shift_[c]).square().mean());
    scale_[c] = sd > 1e-12 ? sd : 1.0;
  }
  lo_ = x.colwise().minCoeff().transpose();
  hi_ = x.colwise().maxCoeff().transpose();
  const Vec margin = 0.05 * (hi_ - lo_).cwiseMax(1e-8);
  lo_ -= margin;
  hi_ += margin;

  const int b = static_cast<int>(exponents_.size());
  Mat design(n, b);
  for (int i = 0; i < n; ++i) {
    design.row(i) = features(x.row(i).transpose()).transpose();
  }

  Eigen::ColPivHouseholderQR<Mat> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() == b) {
    coef_ = qr.solve(targets);
  } else {
    // Rank-deficient design: ridge on the normal equations, flagged.
    ridged_ = true;
    Mat gram = design.transpose() * design;
    gram.diagonal().array() += cfg.ridge * std::max(1.0, gram.trace() / b);
    coef_ = gram.ldlt().solve(design.transpose() * targets);
  }
  if (!coef_.allFinite()) throw RegressionSingular("regression produced non-finite coefficients");
}

Vec PolynomialFit::features(const Vec& x) const {
  const Vec z = (x - shift_).cwiseQuotient(scale_);
  Vec phi(exponents_.size());
  for (std::size_t k = 0; k < exponents_.size(); ++k) {
    double v = 1.0;
    for (int c = 0; c < z.size(); ++c) {
      for (int e = 0; e < exponents_[k][c]; ++e) v *= z[c];
    }
    phi[static_cast<int>(k)] = v;
  }
  return phi;
}

Vec PolynomialFit::evaluate(const Vec& x) const {
  const Vec clamped = x.cwiseMax(lo_).cwiseMin(hi_);
  return coef_.transpose() * features(clamped);
}

Mat PolynomialFit::evaluate_all(const Mat& x) const {
  Mat out(x.rows(), coef_.cols());
  for (int i = 0; i < x.rows(); ++i) {
    out.row(i) = evaluate(x.row(i).transpose()).transpose();
  }
  return out;
}

double PolynomialFit::derivative(const Vec& x, int out, int in) const {
  const Vec clamped = x.cwiseMax(lo_).cwiseMin(hi_);
  const Vec z = (clamped - shift_).cwiseQuotient(scale_);
  double acc = 0.0;
  for (std::size_t k = 0; k < exponents_.size(); ++k) {
    const int e_in = exponents_[k][in];
    if (e_in == 0) continue;
    double v = static_cast<double>(e_in);
    for (int c = 0; c < z.size(); ++c) {
      const int e = exponents_[k][c] - (c == in ? 1 : 0);
      for (int j = 0; j < e; ++j) v *= z[c];
    }
    acc += coef_(static_cast<int>(k), out) * v;
  }
  return acc / scale_[in];
}

}  // namespace mfvv
