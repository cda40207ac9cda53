#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "heterot/errors.hpp"
#include "heterot/rng.hpp"

namespace heterot {

/// n points in R^p with implicit uniform weights 1/n.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(Eigen::MatrixXd points) : points_(std::move(points)) {
    if (points_.rows() < 1 || points_.cols() < 1) throw DimensionError("PointCloud needs n >= 1 and p >= 1");
    if (!points_.allFinite()) throw NumericalError("PointCloud contains non-finite entries");
  }

  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }
  const Eigen::MatrixXd& points() const { return points_; }

  PointCloud translated(const Eigen::RowVectorXd& shift) const {
    if (shift.size() != dim()) throw DimensionError("translation vector dimension mismatch");
    return PointCloud(points_.rowwise() + shift);
  }

  /// Applies x -> R x to every point (rows become rows * R^T).
  PointCloud transformed(const Eigen::MatrixXd& r) const {
    if (r.cols() != dim()) throw DimensionError("linear map dimension mismatch");
    return PointCloud(points_ * r.transpose());
  }

  /// Appends trailing zero coordinates up to dimension `to`.
  PointCloud zero_padded(Eigen::Index to) const {
    if (to < dim()) throw DimensionError("zero_padded: target dimension smaller than current");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(size(), to);
    out.leftCols(dim()) = points_;
    return PointCloud(std::move(out));
  }

  Eigen::RowVectorXd mean() const { return points_.colwise().mean(); }

  PointCloud centered() const { return PointCloud(points_.rowwise() - mean()); }

  PointCloud rows(const std::vector<Eigen::Index>& idx) const {
    Eigen::MatrixXd out(idx.size(), dim());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = points_.row(idx[i]);
    return PointCloud(std::move(out));
  }

 private:
  Eigen::MatrixXd points_;
};

/// r-th moment M_r = ((1/n) sum ||x_i||^r)^{1/r}.
inline double moment(const PointCloud& x, double r) {
  if (r < 1.0) throw MethodError("moment: r must be >= 1");
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::pow(x.points().row(i).norm(), r);
  return std::pow(s / static_cast<double>(x.size()), 1.0 / r);
}

/// Subsample without replacement to n points (identity if already n).
inline PointCloud subsample(const PointCloud& x, Eigen::Index n, std::uint64_t seed) {
  if (n > x.size()) throw MethodError("subsample: requested more points than available");
  if (n == x.size()) return x;
  std::vector<Eigen::Index> idx(x.size());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(x.size() - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return x.rows(idx);
}

/// Resamples the larger cloud down to min(n, m) so both have equal counts.
inline std::pair<PointCloud, PointCloud> equalize_sizes(const PointCloud& x, const PointCloud& y, std::uint64_t seed) {
  const Eigen::Index n = std::min(x.size(), y.size());
  return {subsample(x, n, mix_seed(seed, 1)), subsample(y, n, mix_seed(seed, 2))};
}

/// Matrix of pairwise Euclidean distances.
inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& pts) {
  const Eigen::VectorXd sq = pts.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * pts * pts.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  Eigen::MatrixXd d = d2.cwiseMax(0.0).cwiseSqrt();
  d.diagonal().setZero();
  return d;
}

}  // namespace heterot
