#pragma once

// Differentiable sliced quantities on projected samples. Columns are slices:
// column k of a projection matrix holds the n projected samples of slice k.

#include "heterot/autodiff.hpp"
#include "heterot/errors.hpp"

namespace heterot::sliced {

using ad::Tensor;

/// (1/K) sum_k W_r^r(px[:, k], py[:, k]) for equal sample counts.
inline Tensor mean_wasserstein_pow(const Tensor& px, const Tensor& py, double r) {
  if (px.rows() != py.rows()) {
    throw MethodError("sliced W: unequal sample counts " + std::to_string(px.rows()) + " and " +
                      std::to_string(py.rows()));
  }
  if (px.cols() != py.cols()) throw DimensionError("sliced W: unequal slice counts");
  return ad::mean(ad::pow_abs(ad::sort_cols(px) - ad::sort_cols(py), r));
}

/// ((1/K) sum_k W_r^r)^{1/r}.
inline Tensor mean_wasserstein(const Tensor& px, const Tensor& py, double r) {
  return ad::pow(mean_wasserstein_pow(px, py, r), 1.0 / r);
}

namespace detail {

// sum_{i,k} (a_i - a_k)(b_i - b_k) per column, 1 x K.
inline Tensor pair_cross(const Tensor& a, const Tensor& b) {
  const double n = static_cast<double>(a.rows());
  return ad::sub(2.0 * n * ad::col_sum(ad::mul(a, b)), 2.0 * ad::mul(ad::col_sum(a), ad::col_sum(b)));
}

}  // namespace detail

/// (1/K) sum_k J_2^2 of the 1D Gromov-Wasserstein value per slice, with the
/// better monotone coupling per slice chosen on the forward pass and frozen.
/// J_2 carries the 1/2 factor, so each slice contributes J_2^2 = S / 4.
inline Tensor mean_gw2_pow(const Tensor& px, const Tensor& py) {
  if (px.rows() != py.rows()) throw MethodError("sliced GW: unequal sample counts");
  if (px.cols() != py.cols()) throw DimensionError("sliced GW: unequal slice counts");
  const double nn = static_cast<double>(px.rows()) * static_cast<double>(px.rows());
  Tensor a = ad::sort_cols(px);
  Tensor b = ad::sort_cols(py);
  a = ad::sub(a, ad::scale(ad::col_sum(a), 1.0 / static_cast<double>(a.rows())));
  b = ad::sub(b, ad::scale(ad::col_sum(b), 1.0 / static_cast<double>(b.rows())));
  const Tensor b_rev = ad::reverse_rows(b);
  const Tensor base = detail::pair_cross(a, a) + detail::pair_cross(b, b);
  const Tensor asc = base - 2.0 * detail::pair_cross(a, b);
  const Tensor anti = base + 2.0 * detail::pair_cross(a, b_rev);
  // Pick the smaller coupling per column with a constant 0/1 mask.
  ad::Matrix mask(1, px.cols());
  for (Eigen::Index k = 0; k < px.cols(); ++k) mask(0, k) = anti.value()(0, k) < asc.value()(0, k) ? 1.0 : 0.0;
  const Tensor m = ad::constant(mask);
  const Tensor one_minus = ad::constant(ad::Matrix::Ones(1, px.cols()) - mask);
  const Tensor chosen = ad::mul(asc, one_minus) + ad::mul(anti, m);
  return ad::scale(ad::sum(chosen), 0.25 / (nn * static_cast<double>(px.cols())));
}

}  // namespace heterot::sliced
