#include "mfvv/ensemble.hpp"

#include <cmath>

namespace mfvv {

namespace {

void check_finite(const Mat& points) {
  if (!points.allFinite()) throw NonFiniteEvaluation("ensemble coordinates must be finite");
}

}  // namespace

ParticleEnsemble::ParticleEnsemble(Mat points)
    : points_(std::move(points)) {
  if (points_.rows() < 1) throw Error("ensemble needs at least one particle");
  check_finite(points_);
  const int n = static_cast<int>(points_.rows());
  weights_ = Vec::Constant(n, 1.0 / n);
  mean_ = points_.colwise().mean().transpose();
  m2_ = points_.rowwise().squaredNorm().mean();
}

ParticleEnsemble::ParticleEnsemble(Mat points, Vec weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
  if (points_.rows() < 1) throw Error("ensemble needs at least one particle");
  if (weights_.size() != points_.rows()) throw DimensionMismatch("weights/points size mismatch");
  check_finite(points_);
  if ((weights_.array() < 0.0).any()) throw Error("negative ensemble weight");
  if (std::abs(weights_.sum() - 1.0) > 1e-12) throw Error("ensemble weights must sum to 1");
  mean_ = points_.transpose() * weights_;
  m2_ = (points_.rowwise().squaredNorm().array() * weights_.array()).sum();
}

double moment(const ParticleEnsemble& mu, double p) {
  if (p < 1.0) throw Error("moment order must be >= 1");
  if (p == 2.0) return mu.second_moment();
  double acc = 0.0;
  for (int i = 0; i < mu.size(); ++i) {
    acc += mu.weights()[i] * std::pow(mu.points().row(i).norm(), p);
  }
  return acc;
}

}  // namespace mfvv
