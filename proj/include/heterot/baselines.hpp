#pragma once

// Reference discrepancies: sliced, max-sliced and distributional sliced
// Wasserstein for clouds in a common space; sliced Gromov-Wasserstein and its
// rotation-invariant variant; entropic Gromov-Wasserstein.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "heterot/autodiff.hpp"
#include "heterot/dse.hpp"
#include "heterot/errors.hpp"
#include "heterot/ot1d.hpp"
#include "heterot/point_cloud.hpp"
#include "heterot/rng.hpp"
#include "heterot/sliced.hpp"
#include "heterot/sphere.hpp"

namespace heterot::baselines {

namespace detail {

inline void require_same_dim(const PointCloud& x, const PointCloud& y, const char* method) {
  if (x.dim() != y.dim()) {
    throw DimensionError(std::string(method) + ": dimension mismatch (" + std::to_string(x.dim()) + " vs " +
                         std::to_string(y.dim()) + ")");
  }
}

inline void require_same_count(const PointCloud& x, const PointCloud& y, const char* method) {
  if (x.size() != y.size()) {
    throw MethodError(std::string(method) + ": unequal sample counts (" + std::to_string(x.size()) + " vs " +
                      std::to_string(y.size()) + ")");
  }
}

inline std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index c) {
  return std::vector<double>(m.col(c).data(), m.col(c).data() + m.rows());
}

// W_r^r of the projections of x and y on direction u.
inline double projected_wasserstein_pow(const PointCloud& x, const PointCloud& y, const Eigen::VectorXd& u, double r) {
  const Eigen::VectorXd px = x.points() * u;
  const Eigen::VectorXd py = y.points() * u;
  return ot1d::wasserstein_1d_pow(std::vector<double>(px.data(), px.data() + px.size()),
                                  std::vector<double>(py.data(), py.data() + py.size()), r);
}

// W_r^r along u and its gradient with respect to u.
inline double projected_wasserstein_pow_grad(const PointCloud& x, const PointCloud& y, const Eigen::VectorXd& u,
                                             double r, Eigen::VectorXd& grad) {
  const Eigen::VectorXd px = x.points() * u;
  const Eigen::VectorXd py = y.points() * u;
  const ot1d::Samples1D sx(std::vector<double>(px.data(), px.data() + px.size()));
  const ot1d::Samples1D sy(std::vector<double>(py.data(), py.data() + py.size()));
  grad = Eigen::VectorXd::Zero(u.size());
  double cost = 0.0;
  for (const auto& s : ot1d::quantile_coupling(sx, sy)) {
    const double d = px(s.i) - py(s.j);
    const double ad = std::abs(d);
    cost += s.mass * std::pow(ad, r);
    if (ad > 0.0) {
      const double coef = s.mass * r * std::pow(ad, r - 1.0) * (d > 0.0 ? 1.0 : -1.0);
      grad += coef * (x.points().row(s.i) - y.points().row(s.j)).transpose();
    }
  }
  return cost;
}

}  // namespace detail

/// Monte-Carlo sliced Wasserstein ((1/K) sum_k W_r^r(X theta_k, Y theta_k))^{1/r}.
inline double sliced_wasserstein(const PointCloud& x, const PointCloud& y, double r, int slices, std::uint64_t seed) {
  detail::require_same_dim(x, y, "sliced_wasserstein");
  if (r < 1.0) throw MethodError("sliced_wasserstein: order r must be >= 1");
  const auto p = static_cast<int>(x.dim());
  Eigen::MatrixXd dirs;
  if (p == 1) {
    dirs = Eigen::MatrixXd::Ones(1, 1);
    slices = 1;
  } else {
    dirs = sphere::sample_uniform(p, slices, seed).matrix();
  }
  const Eigen::MatrixXd px = x.points() * dirs.transpose();
  const Eigen::MatrixXd py = y.points() * dirs.transpose();
  double total = 0.0;
  for (Eigen::Index k = 0; k < px.cols(); ++k) {
    total += ot1d::wasserstein_1d_pow(detail::column(px, k), detail::column(py, k), r);
  }
  return std::pow(total / static_cast<double>(px.cols()), 1.0 / r);
}

struct MaxSlicedOptions {
  int iterations = 200;
  int candidates = 64;  // random directions screened before ascent
  int restarts = 4;     // best candidates refined by gradient ascent
  double step = 0.1;
};

/// max_theta W_r(X theta, Y theta) by projected gradient ascent on the sphere.
inline double max_sliced_wasserstein(const PointCloud& x, const PointCloud& y, double r, std::uint64_t seed,
                                     const MaxSlicedOptions& opt = {}) {
  detail::require_same_dim(x, y, "max_sliced_wasserstein");
  if (r < 1.0) throw MethodError("max_sliced_wasserstein: order r must be >= 1");
  const auto p = static_cast<int>(x.dim());
  if (p == 1) return std::pow(detail::projected_wasserstein_pow(x, y, Eigen::VectorXd::Ones(1), r), 1.0 / r);

  // Screen random directions plus the mean-difference direction.
  std::vector<Eigen::VectorXd> starts;
  const auto dirs = sphere::sample_uniform(p, std::max(opt.candidates, 1), seed);
  for (Eigen::Index k = 0; k < dirs.count(); ++k) starts.push_back(dirs[k].transpose());
  const Eigen::VectorXd diff = (x.mean() - y.mean()).transpose();
  if (diff.norm() > 1e-12) starts.push_back(diff.normalized());
  std::vector<std::pair<double, Eigen::VectorXd>> scored;
  for (const auto& u : starts) scored.emplace_back(detail::projected_wasserstein_pow(x, y, u, r), u);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  double best = scored.front().first;
  const int restarts = std::min<int>(opt.restarts, static_cast<int>(scored.size()));
  for (int s = 0; s < restarts; ++s) {
    Eigen::VectorXd u = scored[s].second;
    double value = scored[s].first;
    double step = opt.step;
    Eigen::VectorXd grad;
    for (int it = 0; it < opt.iterations && step > 1e-10; ++it) {
      detail::projected_wasserstein_pow_grad(x, y, u, r, grad);
      const Eigen::VectorXd tangent = grad - grad.dot(u) * u;
      if (tangent.norm() < 1e-14) break;
      const Eigen::VectorXd cand = (u + step * tangent.normalized()).normalized();
      const double v = detail::projected_wasserstein_pow(x, y, cand, r);
      if (v > value) {
        u = cand;
        value = v;
      } else {
        step *= 0.5;
      }
    }
    best = std::max(best, value);
  }
  return std::pow(best, 1.0 / r);
}

struct DistributionalSwOptions {
  int slices = 10;
  int iterations = 50;
  double lambda_c = 1.0;
  double lr = 1e-3;
  std::vector<int> hidden{50, 50};
};

/// Distributional sliced Wasserstein: a slicing net f: S^{p-1} -> S^{p-1} ascends
/// L1 - lambda_C * L2 with identity embeddings; returns L1 on the learned directions.
inline double distributional_sw(const PointCloud& x, const PointCloud& y, double r, std::uint64_t seed,
                                const DistributionalSwOptions& opt = {}) {
  detail::require_same_dim(x, y, "distributional_sw");
  detail::require_same_count(x, y, "distributional_sw");
  if (x.dim() < 2) throw DimensionError("distributional_sw: needs dimension >= 2");
  dse::DseConfig cfg;
  cfg.r = r;
  cfg.slices = opt.slices;
  cfg.latent_dim = static_cast<int>(x.dim());
  cfg.iterations = opt.iterations;
  cfg.lambda_c = opt.lambda_c;
  cfg.lambda_a = 0.0;
  cfg.lr_f = opt.lr;
  cfg.hidden_f = opt.hidden;
  cfg.seed = seed;
  auto state = dse::DseState::identity_embeddings(static_cast<int>(x.dim()), cfg);
  return dse::dse_fit(x, y, cfg, state).value;
}

/// Sliced Gromov-Wasserstein with trailing-zero padding of the smaller dimension.
/// Returns ((1/K) sum_k J_r(X theta_k, Y theta_k)^r)^{1/r}.
inline double sgw_with_directions(const PointCloud& x, const PointCloud& y, double r, const Eigen::MatrixXd& dirs) {
  detail::require_same_count(x, y, "sgw");
  const Eigen::Index dim = std::max(x.dim(), y.dim());
  if (dirs.cols() != dim) throw DimensionError("sgw: direction dimension mismatch");
  const Eigen::MatrixXd px = x.zero_padded(dim).points() * dirs.transpose();
  const Eigen::MatrixXd py = y.zero_padded(dim).points() * dirs.transpose();
  double total = 0.0;
  for (Eigen::Index k = 0; k < px.cols(); ++k) {
    total += std::pow(ot1d::gw_1d(detail::column(px, k), detail::column(py, k), r), r);
  }
  return std::pow(total / static_cast<double>(px.cols()), 1.0 / r);
}

inline Eigen::MatrixXd sgw_directions(Eigen::Index dim, int slices, std::uint64_t seed) {
  if (dim == 1) return Eigen::MatrixXd::Ones(1, 1);
  return sphere::sample_uniform(static_cast<int>(dim), slices, seed).matrix();
}

inline double sgw(const PointCloud& x, const PointCloud& y, double r, int slices, std::uint64_t seed) {
  detail::require_same_count(x, y, "sgw");
  return sgw_with_directions(x, y, r, sgw_directions(std::max(x.dim(), y.dim()), slices, seed));
}

struct RiSgwOptions {
  double lr = 0.01;
  int iterations = 500;
  int restarts = 1;  // extra random orthogonal starts besides the identity
};

/// Rotation-invariant SGW: min over orthogonal D of SGW(X D, Y), by Riemannian
/// gradient descent with a QR retraction and backtracking on the step.
/// Uses the order-2 closed form for the gradient; the value is reported at order r.
inline double ri_sgw(const PointCloud& x, const PointCloud& y, double r, int slices, std::uint64_t seed,
                     const RiSgwOptions& opt = {}) {
  if (x.dim() != y.dim()) {
    throw DimensionError("ri_sgw: requires p == q (" + std::to_string(x.dim()) + " vs " + std::to_string(y.dim()) +
                         ")");
  }
  detail::require_same_count(x, y, "ri_sgw");
  const Eigen::Index p = x.dim();
  const Eigen::MatrixXd dirs = sgw_directions(p, slices, seed);
  const Eigen::MatrixXd py = y.points() * dirs.transpose();
  const ad::Tensor ty = ad::constant(py);
  const ad::Tensor tdirs_t = ad::constant(dirs.transpose());
  const ad::Tensor tx = ad::constant(x.points());

  auto value_at = [&](const Eigen::MatrixXd& rot) { return sgw_with_directions(x.transformed(rot.transpose()), y, r, dirs); };
  auto retract = [](const Eigen::MatrixXd& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    const Eigen::MatrixXd rr = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (rr(j, j) < 0.0) q.col(j) *= -1.0;
    }
    return q;
  };

  double best = value_at(Eigen::MatrixXd::Identity(p, p));
  if (p == 1) return best;
  Rng rng(mix_seed(seed, 77));
  for (int start = 0; start <= opt.restarts; ++start) {
    Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(p, p);
    if (start > 0) rot = sphere::random_rotation(static_cast<int>(p), rng.fork_seed());
    double current = value_at(rot);
    best = std::min(best, current);
    double step = opt.lr;
    for (int it = 0; it < opt.iterations && step > 1e-8; ++it) {
      const ad::Tensor trot(rot, true);
      const ad::Tensor px = ad::matmul(ad::matmul(tx, trot), tdirs_t);
      ad::Tensor obj = sliced::mean_gw2_pow(px, ty);
      obj.backward();
      const Eigen::MatrixXd g = trot.grad();
      // Riemannian gradient on the orthogonal group: G - R sym(R^T G).
      const Eigen::MatrixXd rg = rot.transpose() * g;
      const Eigen::MatrixXd riem = g - rot * (0.5 * (rg + rg.transpose()));
      const double gn = riem.norm();
      if (gn < 1e-14) break;
      const Eigen::MatrixXd cand = retract(rot - step * riem / gn);
      const double v = value_at(cand);
      if (v < current) {
        rot = cand;
        current = v;
        best = std::min(best, v);
      } else {
        step *= 0.5;
      }
    }
  }
  return best;
}

struct EntropicGwOptions {
  double epsilon = 0.0;           // <= 0: 5e-3 x median squared pairwise distance
  int outer_iterations = 200;
  int inner_iterations = 100;
  double tolerance = 1e-7;        // max-norm change of the coupling
  bool anneal = true;             // start from a larger epsilon and decrease geometrically
  double anneal_factor = 100.0;
  double anneal_fraction = 0.25;
  bool eccentricity_start = true;  // extra start from matching points by mean distance
  int random_starts = 0;           // extra starts from random assignments
  std::uint64_t seed = 0;
};

struct EntropicGwResult {
  double value = 0.0;  // J_2 at the final coupling
  bool converged = false;
  int outer_iterations = 0;
  Eigen::MatrixXd coupling;
};

namespace detail {

inline double median_squared_distance(const Eigen::MatrixXd& c1, const Eigen::MatrixXd& c2) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(c1.size() + c2.size()) / 2);
  for (const auto* c : {&c1, &c2}) {
    for (Eigen::Index i = 0; i < c->rows(); ++i) {
      for (Eigen::Index j = i + 1; j < c->cols(); ++j) v.push_back((*c)(i, j) * (*c)(i, j));
    }
  }
  if (v.empty()) return 1.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid > 0.0 ? *mid : 1.0;
}

// Entropic OT between a and b for `cost`, warm-started from dual potentials f, g.
// One exact log-domain update of f (row sums of the scaled kernel match a),
// then kernel scaling u, v on K = exp((f + g - C) / eps) with absorption of
// large scalings back into the potentials. Returns the plan diag(u) K diag(v).
inline Eigen::MatrixXd sinkhorn_stabilized(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                                           const Eigen::VectorXd& b, double eps, int iters, double tol,
                                           Eigen::VectorXd& f, Eigen::VectorXd& g) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  // Column i of the transposed work matrix holds row i of the cost.
  Eigen::MatrixXd work = (g.replicate(1, n) - cost.transpose()) / eps;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = work.col(i).maxCoeff();
    f(i) = eps * (std::log(a(i)) - mx - std::log((work.col(i).array() - mx).exp().sum()));
  }
  auto build_kernel = [&]() -> Eigen::MatrixXd {
    Eigen::MatrixXd k = (-cost).colwise() + f;
    k.rowwise() += g.transpose();
    return (k / eps).array().exp().matrix();
  };
  Eigen::MatrixXd kernel = build_kernel();
  Eigen::VectorXd u = Eigen::VectorXd::Ones(n), v = Eigen::VectorXd::Ones(m);
  constexpr double kAbsorb = 1e30;
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd kv = kernel * v;
    if ((kv.array() <= 0.0).any()) throw NumericalError("sinkhorn: kernel row underflow");
    u = a.cwiseQuotient(kv);
    const Eigen::VectorXd ktu = kernel.transpose() * u;
    if ((ktu.array() <= 0.0).any()) throw NumericalError("sinkhorn: kernel column underflow");
    v = b.cwiseQuotient(ktu);
    const double err = (u.cwiseProduct(kernel * v) - a).cwiseAbs().sum();
    if (u.maxCoeff() > kAbsorb || v.maxCoeff() > kAbsorb || u.minCoeff() < 1.0 / kAbsorb ||
        v.minCoeff() < 1.0 / kAbsorb) {
      f += eps * u.array().log().matrix();
      g += eps * v.array().log().matrix();
      u.setOnes();
      v.setOnes();
      kernel = build_kernel();
    }
    if (err < tol) break;
  }
  f += eps * u.array().log().matrix();
  g += eps * v.array().log().matrix();
  return u.asDiagonal() * kernel * v.asDiagonal();
}

}  // namespace detail

/// Entropic Gromov-Wasserstein with square loss on Euclidean distance matrices.
/// Each outer step solves an entropic transport problem whose cost is the GW
/// gradient at the current coupling; the reported value is J_2 = 1/2 <L(C1,C2) T, T>^{1/2}.
inline EntropicGwResult entropic_gw(const PointCloud& x, const PointCloud& y, const EntropicGwOptions& opt = {}) {
  const Eigen::MatrixXd c1 = pairwise_distances(x.points());
  const Eigen::MatrixXd c2 = pairwise_distances(y.points());
  const Eigen::Index n = c1.rows(), m = c2.rows();
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const double eps_target = opt.epsilon > 0.0 ? opt.epsilon : 5e-3 * detail::median_squared_distance(c1, c2);
  if (!(eps_target > 0.0)) throw MethodError("entropic_gw: epsilon must be positive");

  const Eigen::MatrixXd c1sq = c1.cwiseAbs2();
  const Eigen::MatrixXd c2sq = c2.cwiseAbs2();
  const Eigen::VectorXd ra = c1sq * a;
  const Eigen::VectorXd rb = c2sq * b;
  auto tens = [&](const Eigen::MatrixXd& t) -> Eigen::MatrixXd {
    Eigen::MatrixXd out = -2.0 * (c1 * t * c2.transpose());
    out.colwise() += ra;
    out.rowwise() += rb.transpose();
    return out;
  };

  auto objective = [&](const Eigen::MatrixXd& t) { return tens(t).cwiseProduct(t).sum(); };

  // Block-coordinate descent from coupling t0; annealed starts begin at a larger epsilon.
  auto solve_from = [&](Eigen::MatrixXd t, bool anneal) {
    EntropicGwResult res;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
    const int anneal_steps = anneal ? std::max(1, static_cast<int>(opt.anneal_fraction * opt.outer_iterations)) : 0;
    const double eps_start = anneal ? opt.anneal_factor * eps_target : eps_target;
    for (int it = 0; it < opt.outer_iterations; ++it) {
      double eps = eps_target;
      if (it < anneal_steps) eps = eps_start * std::pow(eps_target / eps_start, static_cast<double>(it) / anneal_steps);
      Eigen::MatrixXd next = detail::sinkhorn_stabilized(tens(t), a, b, eps, opt.inner_iterations, 1e-9, f, g);
      if (!next.allFinite()) throw NumericalError("entropic_gw: non-finite coupling");
      const double change = (next - t).cwiseAbs().maxCoeff();
      t = std::move(next);
      res.outer_iterations = it + 1;
      if (it >= anneal_steps && change <= opt.tolerance) {
        res.converged = true;
        break;
      }
    }
    res.value = 0.5 * std::sqrt(std::max(objective(t), 0.0));
    res.coupling = std::move(t);
    return res;
  };

  EntropicGwResult best = solve_from(a * b.transpose(), opt.anneal);
  auto consider = [&](EntropicGwResult r) {
    if (r.value < best.value) best = std::move(r);
  };
  if (opt.eccentricity_start) {
    // Monotone coupling of the points' mean distances to their own cloud.
    const Eigen::VectorXd ex = c1 * a;
    const Eigen::VectorXd ey = c2 * b;
    const ot1d::Samples1D sx(std::vector<double>(ex.data(), ex.data() + n));
    const ot1d::Samples1D sy(std::vector<double>(ey.data(), ey.data() + m));
    Eigen::MatrixXd t0 = Eigen::MatrixXd::Zero(n, m);
    for (const auto& seg : ot1d::quantile_coupling(sx, sy)) t0(seg.i, seg.j) += seg.mass;
    consider(solve_from(0.5 * t0 + 0.5 * a * b.transpose(), false));
  }
  if (opt.random_starts > 0) {
    Rng rng(opt.seed);
    for (int s = 0; s < opt.random_starts; ++s) {
      Eigen::MatrixXd t0 = Eigen::MatrixXd::Zero(n, m);
      // Random monotone coupling of random scores: a random assignment for any n, m.
      std::vector<double> sa(n), sb(m);
      for (auto& v : sa) v = rng.uniform();
      for (auto& v : sb) v = rng.uniform();
      for (const auto& seg : ot1d::quantile_coupling(ot1d::Samples1D(sa), ot1d::Samples1D(sb))) {
        t0(seg.i, seg.j) += seg.mass;
      }
      consider(solve_from(0.5 * t0 + 0.5 * a * b.transpose(), false));
    }
  }
  return best;
}

/// Exact J_2 of GW for tiny equal-size clouds by enumerating permutation couplings.
inline double gw_permutation_oracle(const PointCloud& x, const PointCloud& y) {
  detail::require_same_count(x, y, "gw_permutation_oracle");
  if (x.size() > static_cast<Eigen::Index>(ot1d::kOracleMaxSize)) throw MethodError("gw_permutation_oracle: too large");
  const Eigen::MatrixXd c1 = pairwise_distances(x.points());
  const Eigen::MatrixXd c2 = pairwise_distances(y.points());
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double d = c1(i, k) - c2(perm[i], perm[k]);
        s += d * d;
      }
    }
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return 0.5 * std::sqrt(best / static_cast<double>(n * n));
}

}  // namespace heterot::baselines
