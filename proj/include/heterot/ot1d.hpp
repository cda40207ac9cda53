#pragma once

// One-dimensional optimal transport: closed-form W_r through quantile
// functions, the monotone-coupling 1D Gromov-Wasserstein value, and small
// exact oracles used to check both.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "heterot/errors.hpp"

namespace heterot::ot1d {

/// Weighted samples on the real line.
class Samples1D {
 public:
  static constexpr double kWeightTolerance = 1e-12;

  Samples1D(std::vector<double> values) : values_(std::move(values)) {  // NOLINT: implicit from values
    if (values_.empty()) throw MethodError("Samples1D: empty input");
    weights_.assign(values_.size(), 1.0 / static_cast<double>(values_.size()));
    check();
  }

  Samples1D(std::vector<double> values, std::vector<double> weights)
      : values_(std::move(values)), weights_(std::move(weights)) {
    if (values_.empty()) throw MethodError("Samples1D: empty input");
    if (weights_.size() != values_.size()) throw DimensionError("Samples1D: weights and values differ in length");
    check();
  }

  std::size_t size() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }
  const std::vector<double>& weights() const { return weights_; }
  bool uniform() const { return uniform_; }

 private:
  void check() {
    double total = 0.0;
    uniform_ = true;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i])) throw NumericalError("Samples1D: non-finite value");
      if (!(weights_[i] > 0.0)) throw MethodError("Samples1D: weights must be positive");
      if (weights_[i] != weights_[0]) uniform_ = false;
      total += weights_[i];
    }
    if (std::abs(total - 1.0) > kWeightTolerance) throw MethodError("Samples1D: weights must sum to 1");
  }

  std::vector<double> values_;
  std::vector<double> weights_;
  bool uniform_ = true;
};

/// Stable ascending order of the values (ties keep index order).
inline std::vector<std::size_t> sort_order(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

/// One piece of the monotone (quantile) coupling: mass moved from x[i] to y[j].
struct CouplingSegment {
  std::size_t i;
  std::size_t j;
  double mass;
};

/// Monotone coupling of two step CDFs, built by merging their quantile breakpoints.
inline std::vector<CouplingSegment> quantile_coupling(const Samples1D& x, const Samples1D& y) {
  const auto ox = sort_order(x.values());
  const auto oy = sort_order(y.values());
  std::vector<CouplingSegment> segs;
  segs.reserve(x.size() + y.size());
  std::size_t a = 0, b = 0;
  double rx = x.weights()[ox[0]];
  double ry = y.weights()[oy[0]];
  while (a < ox.size() && b < oy.size()) {
    const double m = std::min(rx, ry);
    if (m > 0.0) segs.push_back({ox[a], oy[b], m});
    rx -= m;
    ry -= m;
    // Breakpoints within rounding of each other advance together.
    const bool adv_x = rx <= 1e-15;
    const bool adv_y = ry <= 1e-15;
    if (adv_x) {
      ++a;
      if (a < ox.size()) rx = x.weights()[ox[a]];
    }
    if (adv_y) {
      ++b;
      if (b < oy.size()) ry = y.weights()[oy[b]];
    }
    if (!adv_x && !adv_y) break;
  }
  return segs;
}

/// r-th power of the 1D Wasserstein distance.
inline double wasserstein_1d_pow(const Samples1D& x, const Samples1D& y, double r) {
  if (r < 1.0) throw MethodError("wasserstein_1d: order r must be >= 1");
  double cost = 0.0;
  if (x.uniform() && y.uniform() && x.size() == y.size()) {
    const auto ox = sort_order(x.values());
    const auto oy = sort_order(y.values());
    for (std::size_t k = 0; k < ox.size(); ++k) {
      const double d = std::abs(x.values()[ox[k]] - y.values()[oy[k]]);
      cost += (r == 1.0) ? d : (r == 2.0 ? d * d : std::pow(d, r));
    }
    return cost / static_cast<double>(ox.size());
  }
  for (const auto& s : quantile_coupling(x, y)) {
    cost += s.mass * std::pow(std::abs(x.values()[s.i] - y.values()[s.j]), r);
  }
  return cost;
}

/// W_r between two weighted 1D samples: (int_0^1 |F_x^{-1} - F_y^{-1}|^r)^{1/r}.
inline double wasserstein_1d(const Samples1D& x, const Samples1D& y, double r) {
  return std::pow(wasserstein_1d_pow(x, y, r), 1.0 / r);
}

struct Gradient1D {
  std::vector<double> dx;
  std::vector<double> dy;
};

/// Gradient of W_r^r with respect to the sample values, sort permutations frozen.
/// Equal sizes and uniform weights only.
inline Gradient1D wasserstein_1d_grad(const std::vector<double>& x, const std::vector<double>& y, double r) {
  if (x.size() != y.size()) {
    throw MethodError("wasserstein_1d_grad: unequal sizes " + std::to_string(x.size()) + " and " +
                      std::to_string(y.size()));
  }
  if (x.empty()) throw MethodError("wasserstein_1d_grad: empty input");
  if (r < 1.0) throw MethodError("wasserstein_1d_grad: order r must be >= 1");
  const auto ox = sort_order(x);
  const auto oy = sort_order(y);
  const double n = static_cast<double>(x.size());
  Gradient1D g{std::vector<double>(x.size(), 0.0), std::vector<double>(y.size(), 0.0)};
  for (std::size_t k = 0; k < ox.size(); ++k) {
    const double d = x[ox[k]] - y[oy[k]];
    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    const double dd = r * std::pow(std::abs(d), r - 1.0) * s / n;
    g.dx[ox[k]] = dd;
    g.dy[oy[k]] = -dd;
  }
  return g;
}

namespace detail {

// J_r^r for a given pairing of x[i] with y[pair[i]] (uniform weights), O(n^2).
inline double gw_pairing_pow(const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<std::size_t>& pair, double r) {
  const std::size_t n = x.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double d = std::abs(std::abs(x[i] - x[k]) - std::abs(y[pair[i]] - y[pair[k]]));
      total += (r == 2.0) ? d * d : std::pow(d, r);
    }
  }
  return total / static_cast<double>(n * n);
}

// sum_{i,k} (a_i - a_k)(b_i - b_k) = 2n sum(ab) - 2 sum(a) sum(b), on centered data.
inline double pair_cross(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0.0, sb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
    sab += a[i] * b[i];
  }
  return 2.0 * n * sab - 2.0 * sa * sb;
}

}  // namespace detail

/// Which monotone coupling attains the 1D GW value.
enum class Monotone { ascending, anti };

struct Gw1DResult {
  double value;  // J_r, including the 1/2 factor
  Monotone coupling;
};

/// 1D Gromov-Wasserstein restricted to the two monotone couplings.
/// J_r = 1/2 (sum_{i,k} ||x_i - x_k| - |y_j - y_l||^r g_ij g_kl)^{1/r}.
inline Gw1DResult gw_1d_detailed(const std::vector<double>& x, const std::vector<double>& y, double r) {
  if (x.size() != y.size()) {
    throw MethodError("gw_1d: unequal sample counts " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (x.empty()) throw MethodError("gw_1d: empty input");
  if (r < 1.0) throw MethodError("gw_1d: order r must be >= 1");
  const std::size_t n = x.size();
  const auto ox = sort_order(x);
  const auto oy = sort_order(y);

  double asc = 0.0, anti = 0.0;
  if (r == 2.0) {
    // Pairwise gaps of co-sorted sequences share signs, so |a||b| = +-ab and the
    // double sum reduces to moments. Centering keeps it translation-stable.
    std::vector<double> a(n), b(n), b_rev(n);
    double ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      ma += x[ox[k]];
      mb += y[oy[k]];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = x[ox[k]] - ma;
      b[k] = y[oy[k]] - mb;
    }
    for (std::size_t k = 0; k < n; ++k) b_rev[k] = b[n - 1 - k];
    const double saa = detail::pair_cross(a, a);
    const double sbb = detail::pair_cross(b, b);
    const double nn = static_cast<double>(n * n);
    asc = std::max(0.0, (saa + sbb - 2.0 * detail::pair_cross(a, b)) / nn);
    anti = std::max(0.0, (saa + sbb + 2.0 * detail::pair_cross(a, b_rev)) / nn);
  } else {
    std::vector<double> xs(n), ys(n);
    std::vector<std::size_t> id(n), rev(n);
    for (std::size_t k = 0; k < n; ++k) {
      xs[k] = x[ox[k]];
      ys[k] = y[oy[k]];
      id[k] = k;
      rev[k] = n - 1 - k;
    }
    asc = detail::gw_pairing_pow(xs, ys, id, r);
    anti = detail::gw_pairing_pow(xs, ys, rev, r);
  }
  if (anti < asc) return {0.5 * std::pow(anti, 1.0 / r), Monotone::anti};
  return {0.5 * std::pow(asc, 1.0 / r), Monotone::ascending};
}

inline double gw_1d(const std::vector<double>& x, const std::vector<double>& y, double r) {
  return gw_1d_detailed(x, y, r).value;
}

inline double gw_1d(const Samples1D& x, const Samples1D& y, double r) {
  if (!x.uniform() || !y.uniform()) throw MethodError("gw_1d: uniform weights required");
  return gw_1d(x.values(), y.values(), r);
}

// ---------------------------------------------------------------------------
// Exact oracles for tiny instances.

inline constexpr std::size_t kOracleMaxSize = 7;

/// Exact W_r by min-cost flow (successive shortest paths) on the transport LP.
inline double wasserstein_1d_oracle(const Samples1D& x, const Samples1D& y, double r) {
  const std::size_t n = x.size(), m = y.size();
  if (n > kOracleMaxSize || m > kOracleMaxSize) throw MethodError("wasserstein_1d_oracle: instance too large");
  if (r < 1.0) throw MethodError("wasserstein_1d_oracle: order r must be >= 1");

  // Nodes: 0 source, 1..n supplies, n+1..n+m demands, n+m+1 sink.
  const std::size_t nodes = n + m + 2, src = 0, snk = n + m + 1;
  struct Edge {
    std::size_t to;
    double cap;
    double cost;
    std::size_t rev;
  };
  std::vector<std::vector<Edge>> g(nodes);
  auto add_edge = [&](std::size_t u, std::size_t v, double cap, double cost) {
    g[u].push_back({v, cap, cost, g[v].size()});
    g[v].push_back({u, 0.0, -cost, g[u].size() - 1});
  };
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) add_edge(src, 1 + i, x.weights()[i], 0.0);
  for (std::size_t j = 0; j < m; ++j) add_edge(1 + n + j, snk, y.weights()[j], 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      add_edge(1 + i, 1 + n + j, inf, std::pow(std::abs(x.values()[i] - y.values()[j]), r));
    }
  }

  double total_cost = 0.0, flow = 0.0;
  constexpr double kEps = 1e-15;
  while (flow < 1.0 - 1e-13) {
    std::vector<double> dist(nodes, inf);
    std::vector<std::size_t> prev_node(nodes, nodes), prev_edge(nodes, 0);
    dist[src] = 0.0;
    for (std::size_t iter = 0; iter < nodes; ++iter) {
      bool changed = false;
      for (std::size_t u = 0; u < nodes; ++u) {
        if (dist[u] == inf) continue;
        for (std::size_t e = 0; e < g[u].size(); ++e) {
          const Edge& ed = g[u][e];
          if (ed.cap > kEps && dist[u] + ed.cost < dist[ed.to] - 1e-14) {
            dist[ed.to] = dist[u] + ed.cost;
            prev_node[ed.to] = u;
            prev_edge[ed.to] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (dist[snk] == inf) break;
    double push = inf;
    for (std::size_t v = snk; v != src; v = prev_node[v]) push = std::min(push, g[prev_node[v]][prev_edge[v]].cap);
    for (std::size_t v = snk; v != src; v = prev_node[v]) {
      Edge& ed = g[prev_node[v]][prev_edge[v]];
      ed.cap -= push;
      g[v][ed.rev].cap += push;
    }
    flow += push;
    total_cost += push * dist[snk];
  }
  return std::pow(std::max(total_cost, 0.0), 1.0 / r);
}

/// Exact W_r for equal sizes and uniform weights by enumerating permutations
/// (Birkhoff: the LP optimum is attained at a permutation matrix).
inline double wasserstein_1d_permutation_oracle(const std::vector<double>& x, const std::vector<double>& y, double r) {
  if (x.size() != y.size()) throw MethodError("permutation oracle: unequal sizes");
  if (x.size() > kOracleMaxSize) throw MethodError("permutation oracle: instance too large");
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) c += std::pow(std::abs(x[i] - y[perm[i]]), r);
    best = std::min(best, c / static_cast<double>(x.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best, 1.0 / r);
}

struct GwOracleResult {
  double value;                       // min of J_r over permutation couplings
  std::vector<std::size_t> argmin;    // x[i] paired with y[argmin[i]]
  bool minimizer_is_monotone = false; // exact in this case; an upper bound on GW otherwise
};

/// Minimum of J_r over all n! permutation couplings.
inline GwOracleResult gw_1d_oracle(const std::vector<double>& x, const std::vector<double>& y, double r) {
  if (x.size() != y.size()) throw MethodError("gw_1d_oracle: unequal sample counts");
  if (x.empty()) throw MethodError("gw_1d_oracle: empty input");
  if (x.size() > kOracleMaxSize) throw MethodError("gw_1d_oracle: instance too large");
  const std::size_t n = x.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  GwOracleResult res{std::numeric_limits<double>::infinity(), perm, false};
  do {
    const double c = detail::gw_pairing_pow(x, y, perm, r);
    if (c < res.value) {
      res.value = c;
      res.argmin = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  res.value = 0.5 * std::pow(res.value, 1.0 / r);

  // Monotone if the pairing preserves or reverses the order of x against y.
  bool inc = true, dec = true;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (x[i] < x[k]) {
        if (y[res.argmin[i]] > y[res.argmin[k]]) inc = false;
        if (y[res.argmin[i]] < y[res.argmin[k]]) dec = false;
      }
    }
  }
  res.minimizer_is_monotone = inc || dec;
  return res;
}

}  // namespace heterot::ot1d
