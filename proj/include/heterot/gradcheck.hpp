#pragma once

// Central finite-difference checks for reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "heterot/autodiff.hpp"

namespace heterot::gradcheck {

using ad::Matrix;
using ad::Tensor;

/// Builds a scalar from parameter matrices. Implementations must turn each
/// matrix into a gradient-tracking leaf and append it to `leaves` in order.
using Builder = std::function<Tensor(const std::vector<Matrix>& params, std::vector<Tensor>& leaves)>;

struct Report {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||, floor)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
};

inline Tensor leaf(const Matrix& m, std::vector<Tensor>& leaves) {
  leaves.emplace_back(m, true);
  return leaves.back();
}

/// Compares the tape gradient of `build` with central differences of step h.
inline Report check(const Builder& build, const std::vector<Matrix>& params, double h = 1e-5, double floor = 1e-10) {
  std::vector<Tensor> leaves;
  Tensor out = build(params, leaves);
  out.backward();
  std::vector<Matrix> analytic;
  for (const auto& l : leaves) analytic.push_back(l.grad());

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  auto perturbed = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      const double orig = params[p].data()[i];
      std::vector<Tensor> scratch;
      perturbed[p].data()[i] = orig + h;
      const double up = build(perturbed, scratch).item();
      scratch.clear();
      perturbed[p].data()[i] = orig - h;
      const double down = build(perturbed, scratch).item();
      perturbed[p].data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p].data()[i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  Report r;
  r.analytic_norm = std::sqrt(a2);
  r.numeric_norm = std::sqrt(n2);
  r.relative_error = std::sqrt(diff2) / std::max({r.analytic_norm, r.numeric_norm, floor});
  return r;
}

/// Smallest gap between consecutive sorted entries of any column; sorting paths
/// are only checked when this gap is well above the finite-difference step.
inline double min_sorted_gap(const Matrix& m) {
  double gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < m.cols(); ++k) {
    std::vector<double> c(m.col(k).data(), m.col(k).data() + m.rows());
    std::sort(c.begin(), c.end());
    for (std::size_t i = 1; i < c.size(); ++i) gap = std::min(gap, c[i] - c[i - 1]);
  }
  return gap;
}

}  // namespace heterot::gradcheck
