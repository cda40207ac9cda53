#pragma once

// Experiment drivers: translation and rotation sweeps, cross-dimensional
// generative modeling, runtime scaling and isometry-robust 1-NN retrieval.
// Every driver is a pure function of its spec and returns plain tables.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "heterot/baselines.hpp"
#include "heterot/datasets.hpp"
#include "heterot/dse.hpp"
#include "heterot/errors.hpp"
#include "heterot/nn.hpp"
#include "heterot/point_cloud.hpp"
#include "heterot/rng.hpp"
#include "heterot/sliced.hpp"

namespace heterot::experiments {

/// Shortest round-trip decimal form is not needed; 17 significant digits are exact for doubles.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw std::logic_error("Table::add: row width mismatch");
    rows.push_back(std::move(row));
  }

  std::string to_csv() const {
    std::ostringstream os;
    auto line = [&os](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return os.str();
  }

  /// Values of a numeric column, optionally filtered on another column.
  std::vector<double> column(const std::string& name, const std::string& filter_col = "",
                             const std::string& filter_val = "") const {
    const auto idx = index_of(name);
    const auto fidx = filter_col.empty() ? header.size() : index_of(filter_col);
    std::vector<double> out;
    for (const auto& r : rows) {
      if (fidx < header.size() && r[fidx] != filter_val) continue;
      out.push_back(std::stod(r[idx]));
    }
    return out;
  }

  std::size_t index_of(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::out_of_range("Table: no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

// ---------------------------------------------------------------------------
// Statistics used by the drivers and their checks.

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Population standard deviation over mean.
inline double coefficient_of_variation(const std::vector<double>& v) {
  const double m = mean_of(v);
  return m == 0.0 ? 0.0 : stddev_of(v) / m;
}

inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson on average ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw MethodError("spearman: need equal sizes >= 2");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double ma = mean_of(ra), mb = mean_of(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return (saa == 0.0 || sbb == 0.0) ? 0.0 : sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Specs.

struct SlicedParams {
  int slices = 100;
};

struct RiSgwParams {
  int slices = 100;
  double lr = 0.01;
  int iterations = 500;
  int restarts = 1;
};

struct EntropicParams {
  int outer_iterations = 200;
  int inner_iterations = 100;
  double epsilon = 0.0;
};

struct GenModelParams {
  int target_dim = 3;
  int gen_dim = 2;
  int modes = 4;
  int target_samples = 1000;
  int iterations = 5000;
  int batch = 300;
  double lr = 1e-3;
  double output_l2 = 1e-3;      // SGW only: weight of the mean squared norm of generator outputs
  int snapshot_points = 500;
  int snapshots = 5;            // evenly spaced, including iteration 0 and the last iteration
  double coverage_radius = 1.5;
  std::string loss = "dse";     // dse | sgw
};

struct ScalingParams {
  int pairs = 10;
  int gw_outer_iterations = 10;
};

struct KnnParams {
  int runs = 10;
  int points = 100;
  std::vector<double> strengths{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
};

struct ExperimentSpec {
  std::string kind = "translation";  // translation | rotation | genmodel | scaling | knn
  std::vector<std::string> methods{"dse", "sgw", "ri_sgw"};
  std::vector<double> grid;
  int samples = 500;
  std::vector<std::uint64_t> seeds{0};
  double r = 2.0;
  dse::DseConfig dse;
  SlicedParams sgw;
  RiSgwParams ri_sgw;
  EntropicParams entropic_gw;
  GenModelParams genmodel;
  ScalingParams scaling;
  KnnParams knn;
  int jobs = 1;

  /// Defaults per experiment kind (grids and method lists).
  static ExperimentSpec defaults(const std::string& kind) {
    ExperimentSpec s;
    s.kind = kind;
    if (kind == "translation") {
      s.grid = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
      s.dse.inner_iterations = 5;
    } else if (kind == "rotation") {
      for (int i = 0; i <= 6; ++i) s.grid.push_back(std::numbers::pi / 2.0 * i / 6.0);
      s.dse.inner_iterations = 5;
    } else if (kind == "genmodel") {
      s.methods = {"dse"};
      s.dse.lambda_a = 5.0;
      s.dse.slices = 50;
      s.dse.latent_dim = 2;
    } else if (kind == "scaling") {
      s.methods = {"entropic_gw", "sgw", "dse"};
      s.grid = {100, 250, 500, 1000, 1500, 2000};
    } else if (kind == "knn") {
      s.methods = {"dse", "sgw", "entropic_gw"};
    } else {
      throw ParseError("unknown experiment kind '" + kind + "'");
    }
    return s;
  }

  void validate() const {
    static const std::vector<std::string> kinds{"translation", "rotation", "genmodel", "scaling", "knn"};
    if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) throw ParseError("unknown experiment kind " + kind);
    if ((kind == "translation" || kind == "rotation" || kind == "scaling") && grid.empty()) {
      throw ParseError("experiment grid must be non-empty");
    }
    if (samples < 10) throw ParseError("experiment samples must be >= 10");
    if (seeds.empty()) throw ParseError("at least one seed is required");
    if (methods.empty()) throw ParseError("at least one method is required");
    if (kind == "scaling") {
      for (double n : grid) {
        if (n < 10) throw ParseError("scaling grid values are sample counts >= 10");
      }
    }
    if (kind == "genmodel" && genmodel.loss != "dse" && genmodel.loss != "sgw") {
      throw ParseError("genmodel loss must be dse or sgw");
    }
    dse.validate();
  }

  /// Canonical key=value listing of every field; the spec hash is taken over it.
  std::string canonical() const {
    std::ostringstream os;
    auto list = [](const auto& v) {
      std::ostringstream o;
      for (std::size_t i = 0; i < v.size(); ++i) {
        o << (i ? "," : "");
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(v[i])>>) {
          o << format_number(v[i]);
        } else {
          o << v[i];
        }
      }
      return o.str();
    };
    os << "kind=" << kind << "\nmethods=" << list(methods) << "\ngrid=" << list(grid) << "\nsamples=" << samples
       << "\nseeds=" << list(seeds) << "\nr=" << format_number(r) << "\n";
    os << "dse.slices=" << dse.slices << "\ndse.latent_dim=" << dse.latent_dim << "\ndse.iterations=" << dse.iterations
       << "\ndse.inner_iterations=" << dse.inner_iterations << "\ndse.lambda_c=" << format_number(dse.lambda_c)
       << "\ndse.lambda_a=" << format_number(dse.lambda_a) << "\ndse.lr_f=" << format_number(dse.lr_f)
       << "\ndse.lr_embed=" << format_number(dse.lr_embed) << "\ndse.hidden_f=" << list(dse.hidden_f)
       << "\ndse.hidden_embed=" << list(dse.hidden_embed) << "\ndse.signed_cosine_penalty=" << dse.signed_cosine_penalty
       << "\ndse.tie_equal_dims=" << dse.tie_equal_dims << "\n";
    os << "sgw.slices=" << sgw.slices << "\nri_sgw.slices=" << ri_sgw.slices
       << "\nri_sgw.lr=" << format_number(ri_sgw.lr) << "\nri_sgw.iterations=" << ri_sgw.iterations
       << "\nri_sgw.restarts=" << ri_sgw.restarts << "\n";
    os << "entropic_gw.outer_iterations=" << entropic_gw.outer_iterations
       << "\nentropic_gw.inner_iterations=" << entropic_gw.inner_iterations
       << "\nentropic_gw.epsilon=" << format_number(entropic_gw.epsilon) << "\n";
    const auto& g = genmodel;
    os << "genmodel.target_dim=" << g.target_dim << "\ngenmodel.gen_dim=" << g.gen_dim << "\ngenmodel.modes=" << g.modes
       << "\ngenmodel.target_samples=" << g.target_samples << "\ngenmodel.iterations=" << g.iterations
       << "\ngenmodel.batch=" << g.batch << "\ngenmodel.lr=" << format_number(g.lr)
       << "\ngenmodel.output_l2=" << format_number(g.output_l2) << "\ngenmodel.snapshot_points=" << g.snapshot_points
       << "\ngenmodel.snapshots=" << g.snapshots << "\ngenmodel.coverage_radius=" << format_number(g.coverage_radius)
       << "\ngenmodel.loss=" << g.loss << "\n";
    os << "scaling.pairs=" << scaling.pairs << "\nscaling.gw_outer_iterations=" << scaling.gw_outer_iterations << "\n";
    os << "knn.runs=" << knn.runs << "\nknn.points=" << knn.points << "\nknn.strengths=" << list(knn.strengths) << "\n";
    return os.str();
  }

  /// FNV-1a 64 of the canonical form, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

// ---------------------------------------------------------------------------
// Method dispatch for two clouds.

inline const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> m{"dse", "sw", "max_sw", "dsw", "sgw", "ri_sgw", "entropic_gw"};
  return m;
}

/// Computes one named discrepancy. Stochastic methods draw everything from `seed`.
inline double compute_method(const std::string& method, const PointCloud& x, const PointCloud& y,
                             const ExperimentSpec& spec, std::uint64_t seed) {
  if (method == "dse") {
    auto cfg = spec.dse;
    cfg.seed = seed;
    cfg.r = spec.r;
    return dse::dse_fit(x, y, cfg).value;
  }
  if (method == "sw") return baselines::sliced_wasserstein(x, y, spec.r, spec.sgw.slices, seed);
  if (method == "max_sw") return baselines::max_sliced_wasserstein(x, y, spec.r, seed);
  if (method == "dsw") {
    baselines::DistributionalSwOptions o;
    o.slices = spec.dse.slices;
    o.iterations = spec.dse.iterations;
    o.lambda_c = spec.dse.lambda_c;
    o.lr = spec.dse.lr_f;
    o.hidden = spec.dse.hidden_f;
    return baselines::distributional_sw(x, y, spec.r, seed, o);
  }
  if (method == "sgw") return baselines::sgw(x, y, spec.r, spec.sgw.slices, seed);
  if (method == "ri_sgw") {
    baselines::RiSgwOptions o;
    o.lr = spec.ri_sgw.lr;
    o.iterations = spec.ri_sgw.iterations;
    o.restarts = spec.ri_sgw.restarts;
    return baselines::ri_sgw(x, y, spec.r, spec.ri_sgw.slices, seed, o);
  }
  if (method == "entropic_gw") {
    baselines::EntropicGwOptions o;
    o.outer_iterations = spec.entropic_gw.outer_iterations;
    o.inner_iterations = spec.entropic_gw.inner_iterations;
    o.epsilon = spec.entropic_gw.epsilon;
    o.seed = seed;
    return baselines::entropic_gw(x, y, o).value;
  }
  throw MethodError("unknown method '" + method + "'");
}

/// Runs fn(i) for i in [0, count) on up to `jobs` threads; results keep index order.
template <typename T>
std::vector<T> parallel_map(std::size_t count, int jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(count);
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(jobs), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          out[i] = fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Translation and rotation sweeps.

namespace detail {

inline Table run_sweep(const ExperimentSpec& spec, const char* axis,
                       const std::function<std::pair<PointCloud, PointCloud>(double, std::uint64_t)>& make_pair) {
  Table t{{axis, "method", "value", "seed"}, {}};
  struct Cell {
    double g;
    std::string method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::uint64_t seed : spec.seeds) {
    for (double g : spec.grid) {
      for (const auto& m : spec.methods) cells.push_back({g, m, seed});
    }
  }
  const auto values = parallel_map<double>(cells.size(), spec.jobs, [&](std::size_t i) {
    const auto& c = cells[i];
    const auto [x, y] = make_pair(c.g, c.seed);
    // Method randomness is shared across the grid so that only the data moves.
    return compute_method(c.method, x, y, spec, mix_seed(c.seed, 0x5eed));
  });
  for (std::size_t i = 0; i < cells.size(); ++i) {
    t.add({format_number(cells[i].g), cells[i].method, format_number(values[i]), std::to_string(cells[i].seed)});
  }
  return t;
}

}  // namespace detail

/// Fixed anisotropic 2D Gaussian against an independent sample shifted along x.
inline Table run_translation_sweep(const ExperimentSpec& spec) {
  spec.validate();
  return detail::run_sweep(spec, "shift", [&](double shift, std::uint64_t seed) {
    const auto x = datasets::make_gaussian_2d(spec.samples, Eigen::RowVector2d::Zero(), mix_seed(seed, 1));
    const auto y = datasets::make_gaussian_2d(spec.samples, Eigen::RowVector2d(shift, 0.0), mix_seed(seed, 2));
    return std::make_pair(x, y);
  });
}

/// Fixed spiral against an independently sampled spiral rotated by the grid angle.
inline Table run_rotation_sweep(const ExperimentSpec& spec) {
  spec.validate();
  return detail::run_sweep(spec, "angle", [&](double angle, std::uint64_t seed) {
    const auto x = datasets::make_spiral(spec.samples, 0.0, mix_seed(seed, 1));
    const auto y = datasets::make_spiral(spec.samples, angle, mix_seed(seed, 2));
    return std::make_pair(x, y);
  });
}

// ---------------------------------------------------------------------------
// Mode coverage.

/// Deterministic k-means (farthest-point initialization, Lloyd iterations).
inline Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& pts, int k, int iterations = 100) {
  const Eigen::Index n = pts.rows();
  if (n < k) throw MethodError("kmeans: fewer points than clusters");
  Eigen::MatrixXd c(k, pts.cols());
  c.row(0) = pts.colwise().mean();
  // Start from the point closest to the mean, then farthest-point traversal.
  Eigen::Index first = 0;
  (pts.rowwise() - c.row(0)).rowwise().squaredNorm().minCoeff(&first);
  c.row(0) = pts.row(first);
  Eigen::VectorXd best = (pts.rowwise() - c.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    Eigen::Index far = 0;
    best.maxCoeff(&far);
    c.row(j) = pts.row(far);
    best = best.cwiseMin((pts.rowwise() - c.row(j)).rowwise().squaredNorm());
  }
  std::vector<int> assign(n, -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      (c.rowwise() - pts.row(i)).rowwise().squaredNorm().minCoeff(&arg);
      if (assign[i] != static_cast<int>(arg)) {
        assign[i] = static_cast<int>(arg);
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, pts.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += pts.row(i);
      counts(assign[i]) += 1.0;
    }
    for (int j = 0; j < k; ++j) {
      if (counts(j) > 0) c.row(j) = sums.row(j) / counts(j);
    }
    if (!changed) break;
  }
  return c;
}

struct Coverage {
  std::vector<double> per_mode;  // fraction of generated points near each aligned target center
  double alignment_residual = 0.0;
  double min_fraction() const { return per_mode.empty() ? 0.0 : *std::min_element(per_mode.begin(), per_mode.end()); }
};

/// Mode coverage of a generated cloud that may live in a different space than
/// the target. Target centers are carried into the generated space by the rigid
/// map (orthogonal + translation) that best fits them to the generated k-means
/// centers over all matchings; coverage of mode j is the fraction of generated
/// points within `radius` of the carried center j. Independent of mode labels.
inline Coverage mode_coverage(const Eigen::MatrixXd& generated, const Eigen::MatrixXd& target_centers, double radius) {
  const int k = static_cast<int>(target_centers.rows());
  Coverage cov;
  if (k == 1) {
    const Eigen::RowVectorXd c = generated.colwise().mean();
    const double inside = ((generated.rowwise() - c).rowwise().norm().array() <= radius).cast<double>().sum();
    cov.per_mode = {inside / static_cast<double>(generated.rows())};
    return cov;
  }
  const Eigen::MatrixXd gen_centers = kmeans_centers(generated, k);
  const Eigen::RowVectorXd tmean = target_centers.colwise().mean();
  const Eigen::MatrixXd tc = target_centers.rowwise() - tmean;
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd best_mapped;
  do {
    Eigen::MatrixXd g(k, generated.cols());
    for (int j = 0; j < k; ++j) g.row(j) = gen_centers.row(perm[j]);
    const Eigen::RowVectorXd gmean = g.colwise().mean();
    const Eigen::MatrixXd gc = g.rowwise() - gmean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(gc.transpose() * tc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::MatrixXd q = svd.matrixU() * svd.matrixV().transpose();  // gen_dim x target_dim
    Eigen::MatrixXd mapped = (tc * q.transpose()).rowwise() + gmean;
    const double res = (mapped - g).squaredNorm();
    if (res < best) {
      best = res;
      best_mapped = std::move(mapped);
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  cov.alignment_residual = best;
  for (int j = 0; j < k; ++j) {
    const double inside =
        ((generated.rowwise() - best_mapped.row(j)).rowwise().norm().array() <= radius).cast<double>().sum();
    cov.per_mode.push_back(inside / static_cast<double>(generated.rows()));
  }
  return cov;
}

// ---------------------------------------------------------------------------
// Generative modeling across dimensions.

struct GenModelResult {
  std::vector<int> snapshot_iterations;
  std::vector<Eigen::MatrixXd> snapshots;
  std::vector<double> loss_trace;
  Coverage coverage;
  Eigen::MatrixXd target_centers;
};

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

/// Trains a ReLU generator (noise dim = output dim + 1) against a Gaussian
/// mixture living in another dimension, using DSE or SGW as the loss.
inline GenModelResult run_genmodel_single(const ExperimentSpec& spec, std::uint64_t seed) {
  const auto& g = spec.genmodel;
  if (g.batch < 2 || g.batch > g.target_samples) throw MethodError("genmodel: batch must lie in [2, target_samples]");
  const auto target = datasets::make_gaussian_mixture(g.target_dim, g.modes, g.target_samples, mix_seed(seed, 1));
  const int noise_dim = g.gen_dim + 1;
  const std::vector<int> hidden = g.modes >= 5 ? std::vector<int>{256, 128, 128} : std::vector<int>{256, 128};
  nn::MlpNet gen(nn::MlpNet::dims(noise_dim, hidden, g.gen_dim), nn::OutputHead::identity, mix_seed(seed, 2));
  nn::Adam gen_opt(gen.parameters(), g.lr);

  auto cfg = spec.dse;
  cfg.seed = mix_seed(seed, 3);
  cfg.r = spec.r;
  dse::DseState state(g.gen_dim, g.target_dim, cfg);

  Rng rng(mix_seed(seed, 4));
  Rng snap_rng(mix_seed(seed, 5));
  const Eigen::MatrixXd snapshot_noise = gaussian_matrix(g.snapshot_points, noise_dim, snap_rng);
  const int dim = std::max(g.gen_dim, g.target_dim);

  GenModelResult res;
  res.target_centers = target.centers;
  std::vector<int> snap_at;
  for (int s = 0; s < g.snapshots; ++s) {
    snap_at.push_back(g.snapshots == 1 ? g.iterations : static_cast<int>(std::lround(
                                                            static_cast<double>(g.iterations) * s / (g.snapshots - 1))));
  }
  auto take_snapshot = [&](int it) {
    res.snapshot_iterations.push_back(it);
    res.snapshots.push_back(gen.forward(snapshot_noise));
  };

  std::vector<Eigen::Index> all(target.samples.size());
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  for (int it = 0; it < g.iterations; ++it) {
    if (std::find(snap_at.begin(), snap_at.end(), it) != snap_at.end()) take_snapshot(it);
    // Target minibatch without replacement.
    for (int i = 0; i < g.batch; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(all.size() - i)));
      std::swap(all[i], all[j]);
    }
    Eigen::MatrixXd yb(g.batch, g.target_dim);
    for (int i = 0; i < g.batch; ++i) yb.row(i) = target.samples.points().row(all[i]);
    const Eigen::MatrixXd noise = gaussian_matrix(g.batch, noise_dim, rng);

    ad::Tensor loss;
    try {
      const ad::Tensor xb = gen.forward(ad::constant(noise));
      if (g.loss == "dse") {
        dse::train_embeddings(xb.value(), yb, state, cfg);
        loss = dse::dse_loss_for_training(xb, ad::constant(yb), state, cfg);
      } else {
        const Eigen::MatrixXd dirs = sphere::sample_uniform(dim, spec.sgw.slices, rng.fork_seed()).matrix();
        Eigen::MatrixXd pad_x = Eigen::MatrixXd::Zero(g.gen_dim, dim);
        pad_x.leftCols(g.gen_dim).setIdentity();
        Eigen::MatrixXd pad_y = Eigen::MatrixXd::Zero(g.target_dim, dim);
        pad_y.leftCols(g.target_dim).setIdentity();
        const ad::Tensor px = ad::matmul(xb, ad::constant(pad_x * dirs.transpose()));
        const ad::Tensor py = ad::constant(yb * pad_y * dirs.transpose());
        loss = sliced::mean_gw2_pow(px, py) + ad::scale(ad::mean(ad::square(xb)), g.output_l2 * g.gen_dim);
      }
      res.loss_trace.push_back(loss.item());
      loss.backward();
    } catch (const NumericalError& e) {
      throw NumericalError("genmodel: non-finite loss at iteration " + std::to_string(it) + ": " + e.what());
    }
    gen_opt.step();
    state.f().zero_grad();
    if (state.phi()) state.phi()->zero_grad();
    if (state.psi()) state.psi()->zero_grad();
  }
  if (std::find(snap_at.begin(), snap_at.end(), g.iterations) != snap_at.end()) take_snapshot(g.iterations);

  Rng eval_rng(mix_seed(seed, 6));
  const Eigen::MatrixXd eval = gen.forward(gaussian_matrix(std::max(g.snapshot_points, 1000), noise_dim, eval_rng));
  res.coverage = mode_coverage(eval, target.centers, g.coverage_radius);
  return res;
}

struct GenModelOutput {
  Table losses;     // seed, iteration, loss
  Table coverage;   // seed, mode, fraction
  Table snapshots;  // seed, iteration, x0..x{dim-1}
};

inline GenModelOutput run_genmodel(const ExperimentSpec& spec) {
  spec.validate();
  const auto results = parallel_map<GenModelResult>(spec.seeds.size(), spec.jobs,
                                                    [&](std::size_t i) { return run_genmodel_single(spec, spec.seeds[i]); });
  GenModelOutput out;
  out.losses.header = {"seed", "iteration", "loss"};
  out.coverage.header = {"seed", "mode", "fraction"};
  out.snapshots.header = {"seed", "iteration"};
  for (int j = 0; j < spec.genmodel.gen_dim; ++j) out.snapshots.header.push_back("x" + std::to_string(j));
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto seed = std::to_string(spec.seeds[i]);
    const auto& r = results[i];
    for (std::size_t it = 0; it < r.loss_trace.size(); ++it) {
      out.losses.add({seed, std::to_string(it), format_number(r.loss_trace[it])});
    }
    for (std::size_t m = 0; m < r.coverage.per_mode.size(); ++m) {
      out.coverage.add({seed, std::to_string(m), format_number(r.coverage.per_mode[m])});
    }
    for (std::size_t s = 0; s < r.snapshots.size(); ++s) {
      for (Eigen::Index p = 0; p < r.snapshots[s].rows(); ++p) {
        std::vector<std::string> row{seed, std::to_string(r.snapshot_iterations[s])};
        for (Eigen::Index j = 0; j < r.snapshots[s].cols(); ++j) row.push_back(format_number(r.snapshots[s](p, j)));
        out.snapshots.add(std::move(row));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runtime scaling.

/// Mean and standard deviation of wall time per method and n over random shape pairs.
inline Table run_scaling(const ExperimentSpec& spec) {
  spec.validate();
  Table t{{"n", "method", "mean_ms", "std_ms", "pairs"}, {}};
  const std::uint64_t seed = spec.seeds.front();
  auto local = spec;
  local.entropic_gw.outer_iterations = spec.scaling.gw_outer_iterations;
  for (double nd : spec.grid) {
    const int n = static_cast<int>(nd);
    std::vector<std::pair<PointCloud, PointCloud>> pairs;
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(n)));
    for (int k = 0; k < spec.scaling.pairs; ++k) {
      const int a = static_cast<int>(rng.below(datasets::kShapeClasses));
      const int b = static_cast<int>(rng.below(datasets::kShapeClasses));
      pairs.emplace_back(datasets::make_shape_cloud(a, n, rng.uniform(), rng.fork_seed()),
                         datasets::make_shape_cloud(b, n, rng.uniform(), rng.fork_seed()));
    }
    for (const auto& m : spec.methods) {
      std::vector<double> times;
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        if (m == "entropic_gw") {
          baselines::EntropicGwOptions o;
          o.outer_iterations = local.entropic_gw.outer_iterations;
          o.inner_iterations = local.entropic_gw.inner_iterations;
          o.epsilon = local.entropic_gw.epsilon;
          o.eccentricity_start = false;
          o.tolerance = 0.0;  // fixed budget: every pair runs the same number of outer steps
          baselines::entropic_gw(pairs[k].first, pairs[k].second, o);
        } else {
          compute_method(m, pairs[k].first, pairs[k].second, local, mix_seed(seed, k));
        }
        times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      }
      t.add({std::to_string(n), m, format_number(mean_of(times)), format_number(stddev_of(times)),
             std::to_string(pairs.size())});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// 1-NN classification under isometries.

/// Leave-one-out 1-NN accuracy from a distance matrix (ties go to the lower index).
inline double loo_1nn_accuracy(const Eigen::MatrixXd& dist, const std::vector<int>& labels) {
  const Eigen::Index n = dist.rows();
  int correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (best < 0 || dist(i, j) < dist(i, best)) best = j;
    }
    if (labels[best] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

/// Full pairwise discrepancy matrix among shapes (each unordered pair computed once).
inline Eigen::MatrixXd discrepancy_matrix(const std::string& method, const std::vector<PointCloud>& shapes,
                                          const ExperimentSpec& spec, std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(shapes.size());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) cells.emplace_back(i, j);
  }
  const auto values = parallel_map<double>(cells.size(), spec.jobs, [&](std::size_t c) {
    return compute_method(method, shapes[cells[c].first], shapes[cells[c].second], spec, mix_seed(seed, c));
  });
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    d(cells[c].first, cells[c].second) = values[c];
    d(cells[c].second, cells[c].first) = values[c];
  }
  return d;
}

/// 3 classes x len(strengths) shapes per run; accuracy per method and run.
inline Table run_knn(const ExperimentSpec& spec) {
  spec.validate();
  Table t{{"method", "run", "accuracy"}, {}};
  const std::uint64_t seed = spec.seeds.front();
  for (int run = 0; run < spec.knn.runs; ++run) {
    std::vector<PointCloud> shapes;
    std::vector<int> labels;
    for (int c = 0; c < datasets::kShapeClasses; ++c) {
      for (std::size_t s = 0; s < spec.knn.strengths.size(); ++s) {
        const auto shape_seed = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(run)), c * 100 + s);
        shapes.push_back(datasets::make_shape_cloud(c, spec.knn.points, spec.knn.strengths[s], shape_seed));
        labels.push_back(c);
      }
    }
    for (const auto& m : spec.methods) {
      const auto d = discrepancy_matrix(m, shapes, spec, mix_seed(seed, 1000 + run));
      t.add({m, std::to_string(run), format_number(loo_1nn_accuracy(d, labels))});
    }
  }
  return t;
}

}  // namespace heterot::experiments
