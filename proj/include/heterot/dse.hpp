#pragma once

// Distributional sliced embedding discrepancy.
//
// Two point clouds X (n x p) and Y (n x q) are compared through K latent
// directions theta_k on S^{d-1}. A slicing net f: S^{d-1} -> S^{d-1} moves the
// directions; embedding nets phi: S^{d-1} -> S^{p-1} and psi: S^{d-1} -> S^{q-1}
// carry them into each input space, where both clouds are projected and the
// projected samples are compared with the closed-form 1D Wasserstein distance.
// f ascends the sliced cost while phi and psi descend it, both under the
// pairwise-cosine penalty (L2) and the angle-preservation penalty (L3).

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heterot/autodiff.hpp"
#include "heterot/errors.hpp"
#include "heterot/nn.hpp"
#include "heterot/point_cloud.hpp"
#include "heterot/rng.hpp"
#include "heterot/sliced.hpp"
#include "heterot/sphere.hpp"

namespace heterot::dse {

using ad::Matrix;
using ad::Tensor;

struct DseConfig {
  double r = 2.0;
  int slices = 10;      // K
  int latent_dim = 5;   // d
  int iterations = 50;  // T
  int inner_iterations = 1;  // N
  double lambda_c = 1.0;
  double lambda_a = 1.0;
  double lr_f = 1e-3;
  double lr_embed = 1e-3;
  std::uint64_t seed = 0;
  std::vector<int> hidden_f{50, 50};
  std::vector<int> hidden_embed{10, 10};
  bool signed_cosine_penalty = false;  // L2 without the absolute value
  bool tie_equal_dims = true;          // psi starts as a copy of phi when p == q

  void validate() const {
    if (r < 1.0) throw MethodError("DseConfig: order r must be >= 1");
    if (slices < 1) throw MethodError("DseConfig: slice count K must be positive");
    if (latent_dim < 2) throw MethodError("DseConfig: latent dimension d must be >= 2");
    if (iterations < 0 || inner_iterations < 1) throw MethodError("DseConfig: iteration counts must be positive");
    if (lambda_c < 0.0 || lambda_a < 0.0) throw MethodError("DseConfig: regularization weights must be >= 0");
    if (!(lr_f > 0.0) || !(lr_embed > 0.0)) throw MethodError("DseConfig: learning rates must be positive");
    for (int h : hidden_f) {
      if (h <= 0) throw MethodError("DseConfig: hidden sizes must be positive");
    }
    for (int h : hidden_embed) {
      if (h <= 0) throw MethodError("DseConfig: hidden sizes must be positive");
    }
  }
};

/// Nets, optimizers and frozen base directions of one estimator run.
/// When phi/psi are absent the embedding is the identity (p = q = d).
class DseState {
 public:
  DseState(int p, int q, const DseConfig& cfg) : DseState(p, q, cfg, false) {}

  /// phi = psi = identity; used by the distributional sliced Wasserstein baseline.
  static DseState identity_embeddings(int p, const DseConfig& cfg) { return DseState(p, p, cfg, true); }

  const nn::MlpNet& f() const { return f_; }
  nn::MlpNet& f() { return f_; }
  const std::optional<nn::MlpNet>& phi() const { return phi_; }
  const std::optional<nn::MlpNet>& psi() const { return psi_; }
  std::optional<nn::MlpNet>& phi() { return phi_; }
  std::optional<nn::MlpNet>& psi() { return psi_; }
  const sphere::DirectionSet& base_directions() const { return base_; }
  int p() const { return p_; }
  int q() const { return q_; }

  nn::Adam& f_optimizer() { return *adam_f_; }
  bool has_embeddings() const { return phi_.has_value(); }
  nn::Adam& embed_optimizer() { return *adam_embed_; }

  /// Replaces the base directions (rows must be unit vectors in R^d).
  void set_base_directions(sphere::DirectionSet dirs) {
    if (dirs.dim() != f_.input_dim()) throw DimensionError("base directions dimension mismatch");
    base_ = std::move(dirs);
  }

  /// Installs nets restored from a checkpoint and resets the optimizers.
  void set_nets(nn::MlpNet f, std::optional<nn::MlpNet> phi, std::optional<nn::MlpNet> psi) {
    f_ = std::move(f);
    phi_ = std::move(phi);
    psi_ = std::move(psi);
    reset_optimizers();
  }

 private:
  DseState(int p, int q, const DseConfig& cfg, bool identity) : p_(p), q_(q), cfg_(cfg) {
    cfg.validate();
    if (p < 1 || q < 1) throw DimensionError("DseState: input dimensions must be positive");
    const int d = identity ? p : cfg.latent_dim;
    if (identity && p < 2) throw DimensionError("identity embeddings need p >= 2");
    Rng seeds(cfg.seed);
    const auto dir_seed = seeds.fork_seed();
    const auto f_seed = seeds.fork_seed();
    const auto phi_seed = seeds.fork_seed();
    const auto psi_seed = seeds.fork_seed();
    base_ = sphere::sample_uniform(d, cfg.slices, dir_seed);
    f_ = nn::MlpNet(nn::MlpNet::dims(d, cfg.hidden_f, d), nn::OutputHead::sphere_normalize, f_seed);
    if (!identity) {
      phi_ = nn::MlpNet(nn::MlpNet::dims(d, cfg.hidden_embed, p), nn::OutputHead::sphere_normalize, phi_seed);
      if (p == q && cfg.tie_equal_dims) {
        psi_ = phi_->clone();
      } else {
        psi_ = nn::MlpNet(nn::MlpNet::dims(d, cfg.hidden_embed, q), nn::OutputHead::sphere_normalize, psi_seed);
      }
    }
    reset_optimizers();
  }

  void reset_optimizers() {
    adam_f_.emplace(f_.parameters(), cfg_.lr_f);
    if (phi_) {
      auto params = phi_->parameters();
      for (const auto& t : psi_->parameters()) params.push_back(t);
      adam_embed_.emplace(std::move(params), cfg_.lr_embed);
    }
  }

  int p_, q_;
  DseConfig cfg_;
  nn::MlpNet f_;
  std::optional<nn::MlpNet> phi_, psi_;
  std::optional<nn::Adam> adam_f_, adam_embed_;
  sphere::DirectionSet base_;
};

/// Embedded directions phi[f(theta_k)] (K x p) and psi[f(theta_k)] (K x q).
struct Embedded {
  Tensor phi;
  Tensor psi;
};

inline Embedded embed(const DseState& s, const Matrix& latent) {
  const Tensor moved = s.f().forward(ad::constant(latent));
  if (!s.has_embeddings()) return {moved, moved};
  return {s.phi()->forward(moved), s.psi()->forward(moved)};
}

inline Embedded embed(const DseState& s) { return embed(s, s.base_directions().matrix()); }

struct Losses {
  Tensor l1;
  Tensor l2;
  Tensor l3;
};

namespace detail {

inline void check_inputs(const Tensor& x, const Tensor& y, const DseState& s) {
  if (x.cols() != s.p() || y.cols() != s.q()) {
    throw DimensionError("DSE: inputs have dimensions " + std::to_string(x.cols()) + " and " +
                         std::to_string(y.cols()) + ", state expects " + std::to_string(s.p()) + " and " +
                         std::to_string(s.q()));
  }
  if (x.rows() != y.rows()) {
    throw MethodError("DSE: unequal sample counts " + std::to_string(x.rows()) + " and " + std::to_string(y.rows()));
  }
}

inline Tensor cosine_penalty(const Tensor& e, bool signed_variant) {
  const Tensor gram = ad::matmul(e, ad::transpose(e));
  return signed_variant ? ad::sum(gram) : ad::sum(ad::abs(gram));
}

inline Tensor angle_penalty(const Tensor& e, const Tensor& base_gram) {
  return ad::sum(ad::square(ad::matmul(e, ad::transpose(e)) - base_gram));
}

}  // namespace detail

/// L1 = ((1/K) sum_k W_r^r(X phi[f(theta_k)], Y psi[f(theta_k)]))^{1/r}.
inline Tensor loss_l1(const Tensor& x, const Tensor& y, const Embedded& e, double r) {
  const Tensor px = ad::matmul(x, ad::transpose(e.phi));
  const Tensor py = ad::matmul(y, ad::transpose(e.psi));
  return sliced::mean_wasserstein(px, py, r);
}

/// L2 = sum_{k,k'} |<phi_k, phi_k'>| + sum_{k,k'} |<psi_k, psi_k'>|.
inline Tensor loss_l2(const Embedded& e, bool signed_variant = false) {
  return detail::cosine_penalty(e.phi, signed_variant) + detail::cosine_penalty(e.psi, signed_variant);
}

/// L3 = sum_{k,k'} (<phi_k, phi_k'> - <theta_k, theta_k'>)^2 + the same for psi.
inline Tensor loss_l3(const Embedded& e, const Matrix& base) {
  const Tensor base_gram = ad::constant(base * base.transpose());
  return detail::angle_penalty(e.phi, base_gram) + detail::angle_penalty(e.psi, base_gram);
}

inline Losses compute_losses(const Tensor& x, const Tensor& y, const DseState& s, const DseConfig& cfg) {
  detail::check_inputs(x, y, s);
  const Embedded e = embed(s);
  return {loss_l1(x, y, e, cfg.r), loss_l2(e, cfg.signed_cosine_penalty), loss_l3(e, s.base_directions().matrix())};
}

inline Losses compute_losses(const PointCloud& x, const PointCloud& y, const DseState& s, const DseConfig& cfg) {
  return compute_losses(ad::constant(x.points()), ad::constant(y.points()), s, cfg);
}

struct DseResult {
  double value = 0.0;
  std::vector<double> trace_l1, trace_l2, trace_l3;
  sphere::Admissibility admissibility;
  double wall_time_ms = 0.0;
  DseConfig config;
};

struct StepLosses {
  double l1, l2, l3;
};

/// f-step: minimize -L1 + lambda_C L2 + lambda_a L3 over f with phi, psi frozen.
inline StepLosses slicing_step(const Tensor& x, const Tensor& y, DseState& s, const DseConfig& cfg) {
  const Losses l = compute_losses(x, y, s, cfg);
  Tensor obj = ad::scale(l.l1, -1.0) + ad::scale(l.l2, cfg.lambda_c);
  if (s.has_embeddings()) obj = obj + ad::scale(l.l3, cfg.lambda_a);
  obj.backward();
  s.f_optimizer().step();
  if (s.has_embeddings()) s.embed_optimizer().zero_grad();
  return {l.l1.item(), l.l2.item(), l.l3.item()};
}

/// phi,psi-step: minimize L1 + lambda_C L2 + lambda_a L3 over phi, psi with f frozen.
inline StepLosses embedding_step(const Tensor& x, const Tensor& y, DseState& s, const DseConfig& cfg) {
  const Losses l = compute_losses(x, y, s, cfg);
  Tensor obj = l.l1 + ad::scale(l.l2, cfg.lambda_c) + ad::scale(l.l3, cfg.lambda_a);
  obj.backward();
  s.embed_optimizer().step();
  s.f_optimizer().zero_grad();
  return {l.l1.item(), l.l2.item(), l.l3.item()};
}

/// L1 on the current state without building gradients.
inline double evaluate(const PointCloud& x, const PointCloud& y, const DseState& s, double r) {
  const Embedded e = embed(s);
  const Matrix px = x.points() * e.phi.value().transpose();
  const Matrix py = y.points() * e.psi.value().transpose();
  return sliced::mean_wasserstein(ad::constant(px), ad::constant(py), r).item();
}

/// Runs the alternating min-max optimization and returns the final estimate.
inline DseResult dse_fit(const PointCloud& x, const PointCloud& y, const DseConfig& cfg, DseState& state) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const Tensor tx = ad::constant(x.points());
  const Tensor ty = ad::constant(y.points());
  detail::check_inputs(tx, ty, state);

  DseResult res;
  res.config = cfg;
  const std::size_t steps = static_cast<std::size_t>(cfg.iterations) * (state.has_embeddings() ? 2 : 1) *
                            static_cast<std::size_t>(cfg.inner_iterations);
  res.trace_l1.reserve(steps);
  res.trace_l2.reserve(steps);
  res.trace_l3.reserve(steps);
  auto record = [&](const StepLosses& l) {
    res.trace_l1.push_back(l.l1);
    res.trace_l2.push_back(l.l2);
    res.trace_l3.push_back(l.l3);
  };

  for (int t = 0; t < cfg.iterations; ++t) {
    try {
      for (int i = 0; i < cfg.inner_iterations; ++i) record(slicing_step(tx, ty, state, cfg));
      if (state.has_embeddings()) {
        for (int i = 0; i < cfg.inner_iterations; ++i) record(embedding_step(tx, ty, state, cfg));
      }
    } catch (const NumericalError& err) {
      throw NumericalError("dse_fit: non-finite loss at iteration " + std::to_string(t) + ": " + err.what());
    }
  }

  res.value = evaluate(x, y, state, cfg.r);
  if (!std::isfinite(res.value)) throw NumericalError("dse_fit: non-finite final value");
  const Embedded e = embed(state);
  if (cfg.slices >= 2) res.admissibility = sphere::admissibility_check(e.phi.value(), e.psi.value(), 1.0, 1.0);
  res.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline DseResult dse_fit(const PointCloud& x, const PointCloud& y, const DseConfig& cfg) {
  DseState state(static_cast<int>(x.dim()), static_cast<int>(y.dim()), cfg);
  return dse_fit(x, y, cfg, state);
}

/// Generator-facing loss: L1 on the current state, differentiable in x_batch.
inline Tensor dse_loss_for_training(const Tensor& x_batch, const Tensor& y_batch, const DseState& s,
                                    const DseConfig& cfg) {
  detail::check_inputs(x_batch, y_batch, s);
  return loss_l1(x_batch, y_batch, embed(s), cfg.r);
}

/// One alternation (N slicing steps then N embedding steps) on detached batches.
inline void train_embeddings(const Matrix& x_batch, const Matrix& y_batch, DseState& s, const DseConfig& cfg) {
  const Tensor tx = ad::constant(x_batch);
  const Tensor ty = ad::constant(y_batch);
  for (int i = 0; i < cfg.inner_iterations; ++i) slicing_step(tx, ty, s, cfg);
  if (s.has_embeddings()) {
    for (int i = 0; i < cfg.inner_iterations; ++i) embedding_step(tx, ty, s, cfg);
  }
}

/// Min and max of W_r(X phi[f(theta)], Y psi[f(theta)]) over fresh uniform latent directions.
struct SliceRange {
  double min = 0.0;
  double max = 0.0;
};

inline SliceRange slice_range(const PointCloud& x, const PointCloud& y, const DseState& s, double r, int count,
                              std::uint64_t seed) {
  const auto latent = sphere::sample_uniform(static_cast<int>(s.base_directions().dim()), count, seed);
  const Embedded e = embed(s, latent.matrix());
  const Matrix px = x.points() * e.phi.value().transpose();
  const Matrix py = y.points() * e.psi.value().transpose();
  SliceRange out{std::numeric_limits<double>::infinity(), 0.0};
  for (Eigen::Index k = 0; k < px.cols(); ++k) {
    const Tensor w = sliced::mean_wasserstein(ad::constant(px.col(k)), ad::constant(py.col(k)), r);
    out.min = std::min(out.min, w.item());
    out.max = std::max(out.max, w.item());
  }
  return out;
}

}  // namespace heterot::dse
