#pragma once

// Release self-checks: exact-oracle equivalence, finite-difference gradient
// checks and quick DSE property checks. Used by `heterot selftest`.

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "heterot/dse.hpp"
#include "heterot/gradcheck.hpp"
#include "heterot/nn.hpp"
#include "heterot/ot1d.hpp"
#include "heterot/point_cloud.hpp"
#include "heterot/rng.hpp"
#include "heterot/sphere.hpp"

namespace heterot::selftest {

using ad::Matrix;
using ad::Tensor;

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Options {
  bool quick = false;
  std::uint64_t seed = 0;
  // Test fixture: negates the closed-form 1D Wasserstein gradient before it is checked.
  bool flip_wasserstein_grad_sign = false;
};

inline Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

inline std::vector<double> gaussian_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// ---------------------------------------------------------------------------
// Gradient configurations shared with the test suites.

/// Random small problem for loss gradient checks; sorted projections keep a
/// clear margin from ties.
struct LossProblem {
  Matrix x, y, phi_raw, psi_raw, base;
  double r = 2.0;
};

inline LossProblem make_loss_problem(std::uint64_t seed) {
  Rng rng(seed);
  LossProblem p;
  const int n = 4 + static_cast<int>(rng.below(9));
  const int dp = 2 + static_cast<int>(rng.below(3));
  const int dq = 2 + static_cast<int>(rng.below(3));
  const int k = 2 + static_cast<int>(rng.below(4));
  const int d = 2 + static_cast<int>(rng.below(3));
  static constexpr double kOrders[] = {1.5, 2.0, 2.5, 3.0};
  p.r = kOrders[rng.below(4)];
  p.base = sphere::sample_uniform(d, k, rng.fork_seed()).matrix();
  for (int attempt = 0;; ++attempt) {
    p.x = gaussian(n, dp, rng);
    p.y = gaussian(n, dq, rng);
    p.phi_raw = gaussian(k, dp, rng);
    p.psi_raw = gaussian(k, dq, rng);
    const Matrix px = p.x * p.phi_raw.rowwise().normalized().transpose();
    const Matrix py = p.y * p.psi_raw.rowwise().normalized().transpose();
    // Away from ties, and sorted differences away from 0 where |.|^r kinks.
    if (gradcheck::min_sorted_gap(px) > 1e-3 && gradcheck::min_sorted_gap(py) > 1e-3) {
      Matrix sx = px, sy = py;
      for (Eigen::Index c = 0; c < sx.cols(); ++c) {
        std::sort(sx.col(c).data(), sx.col(c).data() + sx.rows());
        std::sort(sy.col(c).data(), sy.col(c).data() + sy.rows());
      }
      if ((sx - sy).cwiseAbs().minCoeff() > 1e-3 || attempt > 50) return p;
    }
  }
}

/// Which loss a gradient check differentiates.
enum class LossKind { l1, l2, l3 };

inline gradcheck::Report check_loss_gradient(const LossProblem& p, LossKind kind) {
  const gradcheck::Builder build = [&](const std::vector<Matrix>& m, std::vector<Tensor>& leaves) {
    const Tensor x = gradcheck::leaf(m[0], leaves);
    const Tensor y = gradcheck::leaf(m[1], leaves);
    const Tensor phi = gradcheck::leaf(m[2], leaves);
    const Tensor psi = gradcheck::leaf(m[3], leaves);
    const dse::Embedded e{ad::sphere_normalize(phi), ad::sphere_normalize(psi)};
    switch (kind) {
      case LossKind::l1: return dse::loss_l1(x, y, e, p.r);
      case LossKind::l2: return dse::loss_l2(e);
      default: return dse::loss_l3(e, p.base);
    }
  };
  return gradcheck::check(build, {p.x, p.y, p.phi_raw, p.psi_raw});
}

/// End-to-end training objective L1 + lc*L2 + la*L3 through f, phi and psi nets,
/// differentiated with respect to every network parameter and both inputs.
/// Returns nothing when a projected column sits within 1e-3 of a sort tie.
inline std::optional<gradcheck::Report> check_training_gradient(std::uint64_t seed) {
  Rng rng(seed);
  dse::DseConfig cfg;
  cfg.slices = 2 + static_cast<int>(rng.below(4));
  cfg.latent_dim = 2 + static_cast<int>(rng.below(3));
  cfg.hidden_f = {4 + static_cast<int>(rng.below(4))};
  cfg.hidden_embed = {3 + static_cast<int>(rng.below(3))};
  cfg.lambda_c = rng.uniform(0.1, 2.0);
  cfg.lambda_a = rng.uniform(0.1, 2.0);
  cfg.r = rng.uniform() < 0.5 ? 2.0 : 1.5;
  cfg.seed = rng.fork_seed();
  cfg.tie_equal_dims = false;
  const int n = 5 + static_cast<int>(rng.below(6));
  const int p = 2 + static_cast<int>(rng.below(3));
  const int q = 2 + static_cast<int>(rng.below(3));
  const dse::DseState state(p, q, cfg);
  const Matrix x = gaussian(n, p, rng);
  const Matrix y = gaussian(n, q, rng);
  const dse::Embedded e0 = dse::embed(state);
  if (gradcheck::min_sorted_gap(x * e0.phi.value().transpose()) < 1e-3 ||
      gradcheck::min_sorted_gap(y * e0.psi.value().transpose()) < 1e-3) {
    return std::nullopt;
  }

  std::vector<Matrix> params{x, y};
  const auto nets = {&state.f(), &*state.phi(), &*state.psi()};
  for (const nn::MlpNet* net : nets) {
    for (const auto& t : net->parameters()) params.push_back(t.value());
  }
  const gradcheck::Builder build = [&](const std::vector<Matrix>& m, std::vector<Tensor>& leaves) {
    std::size_t at = 0;
    const Tensor xt = gradcheck::leaf(m[at++], leaves);
    const Tensor yt = gradcheck::leaf(m[at++], leaves);
    std::vector<nn::MlpNet> rebuilt;
    for (const nn::MlpNet* net : nets) {
      std::vector<Matrix> w, b;
      for (std::size_t l = 0; l < net->weights().size(); ++l) {
        w.push_back(m[at++]);
        b.push_back(m[at++]);
      }
      rebuilt.push_back(nn::MlpNet::from_parameters(std::move(w), std::move(b), net->head()));
      for (const auto& t : rebuilt.back().parameters()) leaves.push_back(t);
    }
    const Tensor latent = rebuilt[0].forward(ad::constant(state.base_directions().matrix()));
    const dse::Embedded e{rebuilt[1].forward(latent), rebuilt[2].forward(latent)};
    return dse::loss_l1(xt, yt, e, cfg.r) + ad::scale(dse::loss_l2(e), cfg.lambda_c) +
           ad::scale(dse::loss_l3(e, state.base_directions().matrix()), cfg.lambda_a);
  };
  return gradcheck::check(build, params);
}

// ---------------------------------------------------------------------------
// Checks.

inline CheckResult check_wasserstein_oracle(const Options& o) {
  Rng rng(mix_seed(o.seed, 11));
  const int instances = o.quick ? 20 : 50;
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = 1 + rng.below(6);
    const double r = 1.0 + 2.0 * rng.uniform();
    const auto x = gaussian_vector(n, rng);
    const auto y = gaussian_vector(n, rng);
    const double fast = ot1d::wasserstein_1d(x, y, r);
    const double exact = ot1d::wasserstein_1d_oracle(x, y, r);
    worst = std::max(worst, std::abs(fast - exact));
  }
  return {"ot1d.wasserstein_vs_lp_oracle", worst <= 1e-9, "max abs error " + std::to_string(worst)};
}

inline CheckResult check_gw_oracle(const Options& o) {
  Rng rng(mix_seed(o.seed, 12));
  const int instances = o.quick ? 20 : 50;
  double worst = 0.0;
  int non_monotone = 0;
  bool below_oracle = false;
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = 1 + rng.below(6);
    const auto x = gaussian_vector(n, rng);
    const auto y = gaussian_vector(n, rng);
    const double fast = ot1d::gw_1d(x, y, 2.0);
    const auto exact = ot1d::gw_1d_oracle(x, y, 2.0);
    // Enumeration is exact when its minimizer is monotone; otherwise gw_1d is only an upper bound.
    if (exact.minimizer_is_monotone) {
      worst = std::max(worst, std::abs(fast - exact.value));
    } else {
      ++non_monotone;
      below_oracle = below_oracle || fast < exact.value - 1e-12;
    }
  }
  return {"ot1d.gw_vs_permutation_oracle", worst <= 1e-9 && !below_oracle,
          "max abs error " + std::to_string(worst) + ", non-monotone minimizers " + std::to_string(non_monotone)};
}

inline CheckResult check_wasserstein_gradient(const Options& o) {
  Rng rng(mix_seed(o.seed, 13));
  const int instances = o.quick ? 20 : 100;
  double worst = 0.0;
  const double h = 1e-6;
  for (int i = 0; i < instances; ++i) {
    const std::size_t n = 2 + rng.below(8);
    const double r = 1.5 + 1.5 * rng.uniform();
    const auto x = gaussian_vector(n, rng);
    const auto y = gaussian_vector(n, rng);
    auto g = ot1d::wasserstein_1d_grad(x, y, r);
    if (o.flip_wasserstein_grad_sign) {
      for (auto& v : g.dx) v = -v;
      for (auto& v : g.dy) v = -v;
    }
    double diff2 = 0.0, norm2 = 0.0;
    auto xp = x;
    for (std::size_t j = 0; j < n; ++j) {
      xp[j] = x[j] + h;
      const double up = ot1d::wasserstein_1d_pow(xp, y, r);
      xp[j] = x[j] - h;
      const double down = ot1d::wasserstein_1d_pow(xp, y, r);
      xp[j] = x[j];
      const double fd = (up - down) / (2.0 * h);
      diff2 += (fd - g.dx[j]) * (fd - g.dx[j]);
      norm2 += fd * fd;
    }
    auto yp = y;
    for (std::size_t j = 0; j < n; ++j) {
      yp[j] = y[j] + h;
      const double up = ot1d::wasserstein_1d_pow(x, yp, r);
      yp[j] = y[j] - h;
      const double down = ot1d::wasserstein_1d_pow(x, yp, r);
      yp[j] = y[j];
      const double fd = (up - down) / (2.0 * h);
      diff2 += (fd - g.dy[j]) * (fd - g.dy[j]);
      norm2 += fd * fd;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12));
  }
  return {"ot1d.wasserstein_gradient", worst <= 1e-3, "max relative error " + std::to_string(worst)};
}

inline CheckResult check_loss_gradients(const Options& o) {
  const int configs = o.quick ? 10 : 40;
  double worst = 0.0;
  for (int i = 0; i < configs; ++i) {
    const auto p = make_loss_problem(mix_seed(o.seed, 1000 + i));
    for (auto kind : {LossKind::l1, LossKind::l2, LossKind::l3}) {
      worst = std::max(worst, check_loss_gradient(p, kind).relative_error);
    }
  }
  return {"autodiff.loss_gradients", worst <= 1e-3, "max relative error " + std::to_string(worst)};
}

inline CheckResult check_training_gradients(const Options& o) {
  const int configs = o.quick ? 5 : 20;
  double worst = 0.0;
  int checked = 0;
  for (int i = 0; checked < configs && i < 20 * configs; ++i) {
    if (const auto r = check_training_gradient(mix_seed(o.seed, 2000 + i))) {
      worst = std::max(worst, r->relative_error);
      ++checked;
    }
  }
  return {"autodiff.training_gradient", checked == configs && worst <= 1e-3,
          "max relative error " + std::to_string(worst) + " over " + std::to_string(checked) + " configs"};
}

inline CheckResult check_gamma_ratio(const Options& o) {
  const int samples = o.quick ? 20000 : 100000;
  double worst = 0.0;
  for (int d : {2, 3, 5}) {
    const auto a = sphere::sample_uniform(d, samples, mix_seed(o.seed, 30 + d)).matrix();
    const auto b = sphere::sample_uniform(d, samples, mix_seed(o.seed, 60 + d)).matrix();
    worst = std::max(worst, std::abs(sphere::mc_abs_inner_product(a, b) - sphere::gamma_ratio(d)));
  }
  return {"sphere.gamma_ratio_monte_carlo", worst <= 0.02, "max abs error " + std::to_string(worst)};
}

/// Quick self-distance, finiteness and translation checks at reduced sample size.
inline std::vector<CheckResult> check_dse_properties(const Options& o) {
  const int n = o.quick ? 60 : 200;
  const int seeds = o.quick ? 3 : 5;
  int self_ok = 0;
  bool finite_ok = true, translation_ok = true;
  double worst_self = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(o.seed, 500 + s));
    const PointCloud x(gaussian(n, 2, rng));
    const PointCloud y(gaussian(n, 3, rng) * 0.5);
    dse::DseConfig cfg;
    cfg.seed = mix_seed(o.seed, 600 + s);
    const double self = dse::dse_fit(x, x, cfg).value;
    const double m2 = std::max(moment(x, 2.0), 1e-3);
    worst_self = std::max(worst_self, self / m2);
    if (self <= 0.05 * m2) ++self_ok;
    const double v = dse::dse_fit(x, y, cfg).value;
    const double bound = std::pow(2.0, (cfg.r - 1.0) / cfg.r) * (moment(x, cfg.r) + moment(y, cfg.r));
    finite_ok = finite_ok && v <= bound + 1e-6;
    const Eigen::RowVectorXd alpha = Eigen::RowVectorXd::Constant(2, 0.7);
    const Eigen::RowVectorXd beta = Eigen::RowVectorXd::Constant(3, -0.4);
    const double moved = dse::dse_fit(x.translated(alpha), y.translated(beta), cfg).value;
    const double rhs = std::pow(2.0, cfg.r - 1.0) * (v + alpha.norm() + beta.norm());
    translation_ok = translation_ok && moved <= 1.05 * rhs;
  }
  const bool self_pass = seeds - self_ok <= 1;
  return {
      {"dse.self_distance", self_pass,
       std::to_string(self_ok) + "/" + std::to_string(seeds) + " seeds within 0.05*M2, worst ratio " +
           std::to_string(worst_self)},
      {"dse.finiteness_bound", finite_ok, ""},
      {"dse.translation_bound", translation_ok, ""},
  };
}

inline std::vector<CheckResult> run_all(const Options& o) {
  std::vector<CheckResult> out;
  out.push_back(check_wasserstein_oracle(o));
  out.push_back(check_gw_oracle(o));
  out.push_back(check_wasserstein_gradient(o));
  out.push_back(check_loss_gradients(o));
  out.push_back(check_training_gradients(o));
  out.push_back(check_gamma_ratio(o));
  for (auto& c : check_dse_properties(o)) out.push_back(std::move(c));
  return out;
}

}  // namespace heterot::selftest
