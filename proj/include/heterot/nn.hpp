#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "heterot/autodiff.hpp"
#include "heterot/errors.hpp"
#include "heterot/rng.hpp"

namespace heterot::nn {

using ad::Matrix;
using ad::Tensor;

enum class OutputHead { identity, sphere_normalize };

inline std::string to_string(OutputHead h) { return h == OutputHead::identity ? "identity" : "sphere_normalize"; }

/// Dense ReLU network; the head is applied after the last affine layer.
class MlpNet {
 public:
  static constexpr double kNormFloor = 1e-12;

  MlpNet() = default;

  /// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
  MlpNet(std::vector<int> layer_dims, OutputHead head, std::uint64_t seed) : dims_(std::move(layer_dims)), head_(head) {
    if (dims_.size() < 2) throw DimensionError("MlpNet needs at least input and output dims");
    for (int d : dims_) {
      if (d <= 0) throw DimensionError("MlpNet layer dims must be positive");
    }
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const double bound = std::sqrt(6.0 / dims_[l]);
      Matrix w(dims_[l], dims_[l + 1]);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
      weights_.emplace_back(std::move(w), true);
      biases_.emplace_back(Matrix::Zero(1, dims_[l + 1]), true);
    }
  }

  /// Builds a net from explicit parameters (checkpoint loading, tests).
  static MlpNet from_parameters(std::vector<Matrix> weights, std::vector<Matrix> biases, OutputHead head) {
    if (weights.empty() || weights.size() != biases.size()) throw DimensionError("MlpNet: weights/biases mismatch");
    MlpNet net;
    net.head_ = head;
    net.dims_.push_back(static_cast<int>(weights.front().rows()));
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != net.dims_.back() || biases[l].rows() != 1 || biases[l].cols() != weights[l].cols()) {
        throw DimensionError("MlpNet: inconsistent layer shapes");
      }
      net.dims_.push_back(static_cast<int>(weights[l].cols()));
      net.weights_.emplace_back(std::move(weights[l]), true);
      net.biases_.emplace_back(std::move(biases[l]), true);
    }
    return net;
  }

  /// Convenience: [in, hidden..., out].
  static std::vector<int> dims(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  }

  Tensor forward(const Tensor& input) const {
    if (input.cols() != dims_.front()) {
      throw DimensionError("MlpNet::forward: input has " + std::to_string(input.cols()) + " columns, net expects " +
                           std::to_string(dims_.front()));
    }
    Tensor h = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      h = ad::add(ad::matmul(h, weights_[l]), biases_[l]);
      if (l + 1 < weights_.size()) h = ad::relu(h);
    }
    if (head_ == OutputHead::sphere_normalize) h = ad::sphere_normalize(h, kNormFloor);
    return h;
  }

  Matrix forward(const Matrix& input) const { return forward(ad::constant(input)).value(); }

  /// Weights and biases interleaved: W0, b0, W1, b1, ...
  std::vector<Tensor> parameters() const {
    std::vector<Tensor> p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      p.push_back(weights_[l]);
      p.push_back(biases_[l]);
    }
    return p;
  }

  void zero_grad() {
    for (auto& t : weights_) t.zero_grad();
    for (auto& t : biases_) t.zero_grad();
  }

  /// Deep copy with fresh leaf tensors.
  MlpNet clone() const {
    std::vector<Matrix> w, b;
    for (const auto& t : weights_) w.push_back(t.value());
    for (const auto& t : biases_) b.push_back(t.value());
    return from_parameters(std::move(w), std::move(b), head_);
  }

  const std::vector<int>& layer_dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  OutputHead head() const { return head_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  const std::vector<Tensor>& biases() const { return biases_; }

 private:
  std::vector<int> dims_;
  OutputHead head_ = OutputHead::identity;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Adam with bias correction over a fixed list of leaf tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0)) throw MethodError("Adam: lr must be positive");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw MethodError("Adam: betas must lie in [0, 1)");
    for (const auto& p : params_) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  /// Applies one update from explicit gradients.
  void step(const std::vector<Matrix>& grads) {
    if (grads.size() != params_.size()) throw DimensionError("Adam::step: gradient count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const Matrix& g = grads[i];
      if (g.rows() != params_[i].rows() || g.cols() != params_[i].cols()) {
        throw DimensionError("Adam::step: gradient shape mismatch");
      }
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseAbs2();
      const Matrix update =
          (lr_ * (m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + eps_)).matrix();
      params_[i].assign(params_[i].value() - update);
    }
  }

  /// Applies one update from the gradients accumulated on the parameters, then clears them.
  void step() {
    std::vector<Matrix> grads;
    grads.reserve(params_.size());
    for (auto& p : params_) grads.push_back(p.grad());
    step(grads);
    for (auto& p : params_) p.zero_grad();
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  long step_count() const { return t_; }
  double lr() const { return lr_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace heterot::nn
