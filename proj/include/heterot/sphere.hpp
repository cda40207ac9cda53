#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "heterot/errors.hpp"
#include "heterot/rng.hpp"

namespace heterot::sphere {

/// K unit vectors in R^d, one per row.
class DirectionSet {
 public:
  static constexpr double kUnitTolerance = 1e-12;

  DirectionSet() = default;

  explicit DirectionSet(Eigen::MatrixXd directions) : dirs_(std::move(directions)) {
    if (dirs_.rows() < 1) throw DimensionError("DirectionSet needs at least one direction");
    if (dirs_.cols() < 1) throw DimensionError("DirectionSet needs a positive dimension");
    for (Eigen::Index k = 0; k < dirs_.rows(); ++k) {
      if (std::abs(dirs_.row(k).norm() - 1.0) > kUnitTolerance) {
        throw DimensionError("DirectionSet row " + std::to_string(k) + " is not unit length");
      }
    }
  }

  Eigen::Index count() const { return dirs_.rows(); }
  Eigen::Index dim() const { return dirs_.cols(); }
  const Eigen::MatrixXd& matrix() const { return dirs_; }
  Eigen::RowVectorXd operator[](Eigen::Index k) const { return dirs_.row(k); }

 private:
  Eigen::MatrixXd dirs_;
};

/// K i.i.d. directions uniform on S^{d-1}: normalized standard Gaussians.
inline DirectionSet sample_uniform(int d, int K, std::uint64_t seed) {
  if (d < 2) throw DimensionError("sample_uniform requires d >= 2, got " + std::to_string(d));
  if (K < 1) throw DimensionError("sample_uniform requires K >= 1");
  Rng rng(seed);
  Eigen::MatrixXd m(K, d);
  for (int k = 0; k < K; ++k) {
    double norm = 0.0;
    while (norm < 1e-300) {
      for (int j = 0; j < d; ++j) m(k, j) = rng.normal();
      norm = m.row(k).norm();
    }
    m.row(k) /= norm;
  }
  return DirectionSet(std::move(m));
}

/// E|<theta, theta'>| for theta, theta' i.i.d. uniform on S^{d-1}:
/// Gamma(d/2) / (sqrt(pi) Gamma((d+1)/2)), evaluated in log space.
inline double gamma_ratio(int d) {
  if (d < 2) throw DimensionError("gamma_ratio requires d >= 2");
  return std::exp(std::lgamma(0.5 * d) - std::lgamma(0.5 * (d + 1))) / std::sqrt(std::numbers::pi);
}

/// Uniform measure over a random orthonormal basis of R^d (K = d rows).
/// Q factor of a Gaussian matrix with the sign of diag(R) fixed, i.e. a Haar rotation.
inline DirectionSet orthonormal_basis_measure(int d, std::uint64_t seed) {
  if (d < 2) throw DimensionError("orthonormal_basis_measure requires d >= 2");
  Rng rng(seed);
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd rows = q.transpose();
  for (int k = 0; k < d; ++k) rows.row(k).normalize();
  return DirectionSet(std::move(rows));
}

/// Mean of |<u_k, u_k'>| over all K^2 ordered pairs, diagonal included.
inline double mean_abs_cosine(const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd gram = rows * rows.transpose();
  return gram.cwiseAbs().sum() / static_cast<double>(gram.size());
}

struct Admissibility {
  double mean_p = 0.0;
  double mean_q = 0.0;
  bool admissible = false;
};

/// Empirical membership test for the constraint sets bounded by C_phi and C_psi.
inline Admissibility admissibility_check(const Eigen::MatrixXd& dirs_p, const Eigen::MatrixXd& dirs_q, double c_phi,
                                         double c_psi) {
  if (dirs_p.rows() < 2 || dirs_q.rows() < 2) throw DimensionError("admissibility_check requires K >= 2");
  Admissibility a;
  a.mean_p = mean_abs_cosine(dirs_p);
  a.mean_q = mean_abs_cosine(dirs_q);
  a.admissible = a.mean_p <= c_phi && a.mean_q <= c_psi;
  return a;
}

/// Monte-Carlo estimate of E|<theta, theta'>| from consecutive pairs of a sample.
inline double mc_abs_inner_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.cwiseProduct(b)).rowwise().sum().cwiseAbs().mean();
}

/// Haar-random orthogonal matrix (d x d).
inline Eigen::MatrixXd random_rotation(int d, std::uint64_t seed) {
  if (d == 1) return Eigen::MatrixXd::Identity(1, 1);
  return orthonormal_basis_measure(d, seed).matrix();
}

}  // namespace heterot::sphere
