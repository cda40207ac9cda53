#pragma once

// Synthetic data: Gaussian mixtures, two-arm spirals and three classes of
// parametric 3D shapes with random rigid motions.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "heterot/errors.hpp"
#include "heterot/point_cloud.hpp"
#include "heterot/rng.hpp"
#include "heterot/sphere.hpp"

namespace heterot::datasets {

inline constexpr double kMixtureRadius = 5.0;
inline constexpr double kMixtureStd = 0.5;
inline constexpr double kSpiralNoise = 0.05;

struct Mixture {
  PointCloud samples;
  Eigen::MatrixXd centers;  // modes x dim
  std::vector<int> labels;
};

/// Mode centers evenly spaced on the circle of radius 5 in the first two
/// coordinates; a single mode sits at the origin.
inline Eigen::MatrixXd mixture_centers(int dim, int modes) {
  if (modes < 1) throw MethodError("mixture: modes must be >= 1");
  if (dim < 2 && modes > 1) throw DimensionError("mixture: several modes need dim >= 2");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(modes, dim);
  if (modes == 1) return c;
  for (int k = 0; k < modes; ++k) {
    const double a = 2.0 * std::numbers::pi * k / modes;
    c(k, 0) = kMixtureRadius * std::cos(a);
    c(k, 1) = kMixtureRadius * std::sin(a);
  }
  return c;
}

/// Equal-weight isotropic Gaussian mixture (component std 0.5).
inline Mixture make_gaussian_mixture(int dim, int modes, int n, std::uint64_t seed) {
  if (n < 1) throw MethodError("make_gaussian_mixture: n must be positive");
  Mixture m{PointCloud(), mixture_centers(dim, modes), {}};
  Rng rng(seed);
  Eigen::MatrixXd pts(n, dim);
  m.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(modes)));
    m.labels[i] = k;
    for (int j = 0; j < dim; ++j) pts(i, j) = m.centers(k, j) + kMixtureStd * rng.normal();
  }
  m.samples = PointCloud(std::move(pts));
  return m;
}

inline Eigen::Matrix2d rotation_2d(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

/// Two interleaved spiral arms (t in [pi/2, 7pi/2], radius t/pi) with Gaussian
/// noise 0.05, rotated counter-clockwise by `angle`.
inline PointCloud make_spiral(int n, double angle, std::uint64_t seed) {
  if (n < 10) throw MethodError("make_spiral: n must be >= 10");
  Rng rng(seed);
  Eigen::MatrixXd pts(n, 2);
  for (int i = 0; i < n; ++i) {
    const double t = std::numbers::pi * (0.5 + 3.0 * std::sqrt(rng.uniform()));
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    pts(i, 0) = sign * t * std::cos(t) / std::numbers::pi + kSpiralNoise * rng.normal();
    pts(i, 1) = sign * t * std::sin(t) / std::numbers::pi + kSpiralNoise * rng.normal();
  }
  return PointCloud(pts * rotation_2d(angle).transpose());
}

inline constexpr int kShapeClasses = 3;

inline std::string shape_name(int class_id) {
  switch (class_id) {
    case 0: return "torus";
    case 1: return "helix_tube";
    case 2: return "lobed_sphere";
    default: throw MethodError("shape class must be 0, 1 or 2");
  }
}

/// Rotation about a random axis by strength * pi plus a translation of length
/// strength * 0.5 in a random direction.
inline PointCloud apply_random_isometry(const PointCloud& x, double strength, std::uint64_t seed) {
  if (strength < 0.0 || strength > 1.0) throw MethodError("isometry strength must lie in [0, 1]");
  if (strength == 0.0) return x;
  Rng rng(seed);
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(strength * std::numbers::pi, axis).toRotationMatrix();
  Eigen::Vector3d shift(rng.normal(), rng.normal(), rng.normal());
  shift = 0.5 * strength * shift.normalized();
  return x.transformed(rot).translated(shift.transpose());
}

/// n points on one of three parametric surfaces, then a random rigid motion.
inline PointCloud make_shape_cloud(int class_id, int n, double isometry_strength, std::uint64_t seed) {
  if (class_id < 0 || class_id >= kShapeClasses) throw MethodError("shape class must be 0, 1 or 2");
  if (n < 1) throw MethodError("make_shape_cloud: n must be positive");
  Rng rng(seed);
  Eigen::MatrixXd pts(n, 3);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    const double u = two_pi * rng.uniform();
    const double v = two_pi * rng.uniform();
    switch (class_id) {
      case 0: {  // torus, R = 2, r = 0.6
        pts.row(i) << (2.0 + 0.6 * std::cos(v)) * std::cos(u), (2.0 + 0.6 * std::cos(v)) * std::sin(u), 0.6 * std::sin(v);
        break;
      }
      case 1: {  // tube of radius 0.3 around a helix of radius 1 and two turns
        const double s = 2.0 * u;
        const Eigen::Vector3d c(std::cos(s), std::sin(s), 0.5 * s - std::numbers::pi);
        const Eigen::Vector3d tangent = Eigen::Vector3d(-std::sin(s), std::cos(s), 0.5).normalized();
        const Eigen::Vector3d normal(-std::cos(s), -std::sin(s), 0.0);
        const Eigen::Vector3d binormal = tangent.cross(normal);
        pts.row(i) = (c + 0.3 * (std::cos(v) * normal + std::sin(v) * binormal)).transpose();
        break;
      }
      default: {  // sphere with six lobes
        const double z = 2.0 * rng.uniform() - 1.0;
        const double phi = std::acos(z);
        const double rad = 1.5 * (1.0 + 0.35 * std::sin(3.0 * u) * std::sin(2.0 * phi));
        pts.row(i) << rad * std::sin(phi) * std::cos(u), rad * std::sin(phi) * std::sin(u), rad * z;
        break;
      }
    }
  }
  return apply_random_isometry(PointCloud(std::move(pts)), isometry_strength, mix_seed(seed, 0x150));
}

/// Anisotropic 2D Gaussian used by the translation study: std (1, 0.5).
inline PointCloud make_gaussian_2d(int n, const Eigen::RowVector2d& mean, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd pts(n, 2);
  for (int i = 0; i < n; ++i) {
    pts(i, 0) = mean(0) + rng.normal();
    pts(i, 1) = mean(1) + 0.5 * rng.normal();
  }
  return PointCloud(std::move(pts));
}

}  // namespace heterot::datasets
