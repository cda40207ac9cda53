// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset, e.g. `acceptance 1 2 4`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "heterot/baselines.hpp"
#include "heterot/datasets.hpp"
#include "heterot/dse.hpp"
#include "heterot/experiments.hpp"
#include "heterot/io.hpp"
#include "heterot/selftest.hpp"

namespace {

using namespace heterot;
using Matrix = Eigen::MatrixXd;
using Clock = std::chrono::steady_clock;

// Tolerances and budgets.
constexpr double kOracleTol = 1e-9;
constexpr double kOracleSeconds = 10.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradTolSorted = 1e-3;
constexpr int kGradConfigs = 40;  // per loss, four losses
constexpr double kGradSeconds = 120.0;
constexpr double kSelfRatio = 0.05;
constexpr int kSelfSeedsRequired = 9;
constexpr double kFiniteSlack = 1e-6;
constexpr double kRotationRel = 0.10;
constexpr double kTranslationSlack = 0.05;
constexpr double kSandwichTolRel = 0.05;
constexpr double kPropSeconds = 15.0 * 60.0;
constexpr double kGammaTol = 0.01;
constexpr double kGammaSeconds = 30.0;
constexpr double kSgwFlatRel = 1e-9;
constexpr double kSpearmanMin = 0.9;
constexpr double kCvRatio = 0.5;
constexpr double kFig3Seconds = 20.0 * 60.0;
constexpr double kCoverageMin = 0.05;
constexpr int kCoverageSeedsRequired = 7;
constexpr double kLossRatio = 0.5;
constexpr double kFig5Seconds = 30.0 * 60.0;
constexpr double kLinearRatioMax = 6.0;
constexpr double kGwRatioMin = 10.0;
constexpr double kFig6Seconds = 20.0 * 60.0;
constexpr double kKnnGap = 0.1;
constexpr double kFig7Seconds = 30.0 * 60.0;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Line {
  bool pass;
  std::string detail;
};

void report(int id, const std::string& name, const Line& l) {
  std::cout << (l.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name << ": " << l.detail << std::endl;
}

Matrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// 1. Exact oracles.

double perm_wasserstein(const std::vector<double>& x, const std::vector<double>& y, double r) {
  std::vector<int> p(x.size());
  std::iota(p.begin(), p.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) c += std::pow(std::abs(x[i] - y[p[i]]), r);
    best = std::min(best, c / static_cast<double>(x.size()));
  } while (std::next_permutation(p.begin(), p.end()));
  return std::pow(best, 1.0 / r);
}

double perm_gw2(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double d = std::abs(x[i] - x[k]) - std::abs(y[p[i]] - y[p[k]]);
        c += d * d;
      }
    }
    best = std::min(best, c / static_cast<double>(n * n));
  } while (std::next_permutation(p.begin(), p.end()));
  return 0.5 * std::sqrt(best);
}

Line criterion_oracles() {
  const auto start = Clock::now();
  Rng rng(20240101);
  double worst_w = 0.0, worst_gw = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.normal(0.0, 3.0);
    for (auto& v : y) v = rng.normal(1.0, 2.0);
    const double r = 1.0 + (t % 3);
    worst_w = std::max(worst_w, std::abs(ot1d::wasserstein_1d(x, y, r) - perm_wasserstein(x, y, r)));
    worst_gw = std::max(worst_gw, std::abs(ot1d::gw_1d(x, y, 2.0) - perm_gw2(x, y)));
  }
  const double secs = seconds_since(start);
  return {worst_w <= kOracleTol && worst_gw <= kOracleTol && secs < kOracleSeconds,
          "max |W - oracle| = " + fmt(worst_w) + ", max |GW - oracle| = " + fmt(worst_gw) + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 2. Gradients against central differences.

using Build = std::function<ad::Tensor(const std::vector<Matrix>&, std::vector<ad::Tensor>&)>;

double fd_relative_error(const Build& build, const std::vector<Matrix>& params) {
  const double h = 1e-5;
  std::vector<ad::Tensor> leaves;
  ad::Tensor out = build(params, leaves);
  out.backward();
  double diff = 0.0, na = 0.0, nn = 0.0;
  auto work = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Matrix g = leaves[p].grad();
    for (Eigen::Index i = 0; i < params[p].size(); ++i) {
      const double orig = work[p].data()[i];
      std::vector<ad::Tensor> scratch;
      work[p].data()[i] = orig + h;
      const double up = build(work, scratch).item();
      scratch.clear();
      work[p].data()[i] = orig - h;
      const double down = build(work, scratch).item();
      work[p].data()[i] = orig;
      const double num = (up - down) / (2.0 * h);
      diff += (num - g.data()[i]) * (num - g.data()[i]);
      na += g.data()[i] * g.data()[i];
      nn += num * num;
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-10});
}

ad::Tensor leaf(const Matrix& m, std::vector<ad::Tensor>& leaves) {
  leaves.emplace_back(m, true);
  return leaves.back();
}

Line criterion_gradients() {
  const auto start = Clock::now();
  double worst[4] = {0, 0, 0, 0};
  int configs = 0;
  for (int c = 0; c < kGradConfigs; ++c) {
    const auto p = selftest::make_loss_problem(mix_seed(777, c));
    for (int kind = 0; kind < 3; ++kind) {
      const Build build = [&](const std::vector<Matrix>& m, std::vector<ad::Tensor>& leaves) {
        const auto x = leaf(m[0], leaves), y = leaf(m[1], leaves);
        const auto phi = leaf(m[2], leaves), psi = leaf(m[3], leaves);
        const dse::Embedded e{ad::sphere_normalize(phi), ad::sphere_normalize(psi)};
        if (kind == 0) return dse::loss_l1(x, y, e, p.r);
        if (kind == 1) return dse::loss_l2(e);
        return dse::loss_l3(e, p.base);
      };
      worst[kind] = std::max(worst[kind], fd_relative_error(build, {p.x, p.y, p.phi_raw, p.psi_raw}));
      ++configs;
    }
  }
  // End-to-end training objective through f, phi, psi and both inputs.
  for (int c = 0; c < kGradConfigs; ++c) {
    Rng rng(mix_seed(778, c));
    dse::DseConfig cfg;
    cfg.slices = 2 + static_cast<int>(rng.below(4));
    cfg.latent_dim = 2 + static_cast<int>(rng.below(3));
    cfg.hidden_f = {5};
    cfg.hidden_embed = {4};
    cfg.lambda_c = rng.uniform(0.1, 2.0);
    cfg.lambda_a = rng.uniform(0.1, 2.0);
    cfg.seed = rng.fork_seed();
    cfg.tie_equal_dims = false;
    const int n = 5 + static_cast<int>(rng.below(5));
    const int p = 2 + static_cast<int>(rng.below(2)), q = 2 + static_cast<int>(rng.below(3));
    const dse::DseState state(p, q, cfg);
    const Matrix x = gaussian(n, p, rng), y = gaussian(n, q, rng);
    const auto e0 = dse::embed(state);
    if (gradcheck::min_sorted_gap(x * e0.phi.value().transpose()) < 1e-3 ||
        gradcheck::min_sorted_gap(y * e0.psi.value().transpose()) < 1e-3) {
      continue;  // too close to a sorting tie for finite differences
    }
    std::vector<Matrix> params{x, y};
    const std::vector<const nn::MlpNet*> nets{&state.f(), &*state.phi(), &*state.psi()};
    for (const auto* net : nets) {
      for (const auto& t : net->parameters()) params.push_back(t.value());
    }
    const Build build = [&](const std::vector<Matrix>& m, std::vector<ad::Tensor>& leaves) {
      std::size_t at = 0;
      const auto xt = leaf(m[at++], leaves), yt = leaf(m[at++], leaves);
      std::vector<nn::MlpNet> rebuilt;
      for (const auto* net : nets) {
        std::vector<Matrix> w, b;
        for (std::size_t l = 0; l < net->weights().size(); ++l) {
          w.push_back(m[at++]);
          b.push_back(m[at++]);
        }
        rebuilt.push_back(nn::MlpNet::from_parameters(w, b, net->head()));
        for (const auto& t : rebuilt.back().parameters()) leaves.push_back(t);
      }
      const auto latent = rebuilt[0].forward(ad::constant(state.base_directions().matrix()));
      const dse::Embedded e{rebuilt[1].forward(latent), rebuilt[2].forward(latent)};
      return dse::loss_l1(xt, yt, e, cfg.r) + ad::scale(dse::loss_l2(e), cfg.lambda_c) +
             ad::scale(dse::loss_l3(e, state.base_directions().matrix()), cfg.lambda_a);
    };
    worst[3] = std::max(worst[3], fd_relative_error(build, params));
    ++configs;
  }
  const double secs = seconds_since(start);
  const bool ok = worst[0] <= kGradTolSorted && worst[1] <= kGradTol && worst[2] <= kGradTol &&
                  worst[3] <= kGradTolSorted && configs >= 100 && secs < kGradSeconds;
  return {ok, std::to_string(configs) + " configs; worst rel. err L1 " + fmt(worst[0]) + ", L2 " + fmt(worst[1]) +
                  ", L3 " + fmt(worst[2]) + ", end-to-end " + fmt(worst[3]) + ", " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 3. Estimator-level properties of the discrepancy.

Line criterion_properties() {
  const auto start = Clock::now();
  const int n = 200, seeds = 10;
  const dse::DseConfig base_cfg;  // K=10, d=5, T=50, N=1
  const double r = base_cfg.r;
  int self_ok = 0;
  bool finite_ok = true, translation_ok = true, sandwich_ok = true;
  double worst_finite = 0.0, worst_translation = 0.0, worst_sandwich = 0.0;
  std::vector<double> plain, rotated, swapped;
  const std::vector<double> shifts{0.5, 1.0, 2.0, 4.0, 8.0};
  auto finite_check = [&](const PointCloud& x, const PointCloud& y, double v) {
    const double bound = std::pow(2.0, (r - 1.0) / r) * (moment(x, r) + moment(y, r));
    worst_finite = std::max(worst_finite, v / bound);
    finite_ok = finite_ok && v <= bound + kFiniteSlack;
  };
  for (int s = 0; s < seeds; ++s) {
    Rng rng(mix_seed(31337, s));
    Matrix mx = gaussian(n, 2, rng);
    mx.col(0) *= 2.0;
    const PointCloud x(mx);
    const PointCloud y(gaussian(n, 3, rng) * 0.8);
    auto cfg = base_cfg;
    cfg.seed = mix_seed(4242, s);

    const double self = dse::dse_fit(x, x, cfg).value;
    self_ok += self <= kSelfRatio * std::max(moment(x, 2.0), 1e-3);
    finite_check(x, x, self);

    dse::DseState state(2, 3, cfg);
    const double v = dse::dse_fit(x, y, cfg, state).value;
    finite_check(x, y, v);
    plain.push_back(v);

    // (e) value against the range of single-slice distances over fresh directions.
    const auto range = dse::slice_range(x, y, state, r, 1000, mix_seed(99, s));
    const double lo = std::pow(1.0 / cfg.latent_dim, 1.0 / r) * range.min;
    const double hi = range.max * (1.0 + kSandwichTolRel);
    sandwich_ok = sandwich_ok && v >= lo && v <= hi;
    worst_sandwich = std::max(worst_sandwich, v / range.max);

    const PointCloud rx = x.transformed(sphere::random_rotation(2, mix_seed(5, s)));
    const PointCloud qy = y.transformed(sphere::random_rotation(3, mix_seed(6, s)));
    const double vr = dse::dse_fit(rx, qy, cfg).value;
    finite_check(rx, qy, vr);
    rotated.push_back(vr);

    swapped.push_back(dse::dse_fit(y, x, cfg).value);

    // (d) one shift magnitude per seed pair, cycling the 5-point grid.
    for (std::size_t k = 0; k < shifts.size(); ++k) {
      if ((s + static_cast<int>(k)) % 2) continue;
      const Eigen::RowVectorXd alpha = Eigen::RowVector2d(0.6, 0.8) * shifts[k];
      const Eigen::RowVectorXd beta = Eigen::RowVector3d(-2.0, 1.0, 2.0) / 3.0 * shifts[k] * 0.5;
      const PointCloud xa = x.translated(alpha), yb = y.translated(beta);
      const double moved = dse::dse_fit(xa, yb, cfg).value;
      finite_check(xa, yb, moved);
      const double rhs = std::pow(2.0, r - 1.0) * (v + alpha.norm() + beta.norm());
      worst_translation = std::max(worst_translation, moved / rhs);
      translation_ok = translation_ok && moved <= (1.0 + kTranslationSlack) * rhs;
    }
  }
  const double mp = experiments::mean_of(plain);
  const double rot_rel = std::abs(experiments::mean_of(rotated) - mp) / mp;
  const double sym_rel = std::abs(experiments::mean_of(swapped) - mp) / mp;
  const bool self_pass = self_ok >= kSelfSeedsRequired;
  const bool rot_pass = rot_rel <= kRotationRel;
  const double secs = seconds_since(start);
  std::ostringstream d;
  d << "(a) self " << self_ok << "/" << seeds << (self_pass ? " ok" : " FAIL") << "; (b) max value/bound "
    << fmt(worst_finite) << (finite_ok ? " ok" : " FAIL") << "; (c) rotation rel. diff of seed means " << fmt(rot_rel)
    << (rot_pass ? " ok" : " FAIL") << "; (d) max value/rhs " << fmt(worst_translation)
    << (translation_ok ? " ok" : " FAIL") << "; (e) max value/M " << fmt(worst_sandwich)
    << (sandwich_ok ? " ok" : " FAIL") << "; symmetry rel. diff " << fmt(sym_rel) << "; " << fmt(secs) << " s";
  return {self_pass && finite_ok && rot_pass && translation_ok && sandwich_ok && secs < kPropSeconds, d.str()};
}

// ---------------------------------------------------------------------------
// 4. Expected absolute inner product of uniform directions.

Line criterion_gamma() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (int d : {2, 3, 5, 10}) {
    const auto a = sphere::sample_uniform(d, 100000, mix_seed(1, d));
    const auto b = sphere::sample_uniform(d, 100000, mix_seed(2, d));
    const double mc = (a.matrix().cwiseProduct(b.matrix())).rowwise().sum().cwiseAbs().mean();
    worst = std::max(worst, std::abs(mc - sphere::gamma_ratio(d)));
  }
  int below = 0;
  for (int d = 2; d <= 100; ++d) below += sphere::gamma_ratio(d) < 1.0 / d;
  const double secs = seconds_since(start);
  return {worst <= kGammaTol && below == 0 && secs < kGammaSeconds,
          "max |MC - gamma_ratio| = " + fmt(worst) + ", dims with gamma_ratio < 1/d: " + std::to_string(below) + ", " +
              fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 5. Translation and rotation sweeps.

Line criterion_sweeps() {
  const auto start = Clock::now();
  auto t = experiments::ExperimentSpec::defaults("translation");
  t.methods = {"dse", "sgw"};
  const auto trans = experiments::run_translation_sweep(t);
  const auto sgw = trans.column("value", "method", "sgw");
  const double sgw_spread = (*std::max_element(sgw.begin(), sgw.end()) - *std::min_element(sgw.begin(), sgw.end())) /
                            experiments::mean_of(sgw);
  const double rho = experiments::spearman(t.grid, trans.column("value", "method", "dse"));

  auto rspec = experiments::ExperimentSpec::defaults("rotation");
  const auto rot = experiments::run_rotation_sweep(rspec);
  const double cv_dse = experiments::coefficient_of_variation(rot.column("value", "method", "dse"));
  const double cv_sgw = experiments::coefficient_of_variation(rot.column("value", "method", "sgw"));
  const double cv_ri = experiments::coefficient_of_variation(rot.column("value", "method", "ri_sgw"));
  const double secs = seconds_since(start);
  const bool ok = sgw_spread <= kSgwFlatRel && rho >= kSpearmanMin && cv_dse <= kCvRatio * cv_sgw &&
                  cv_ri <= kCvRatio * cv_sgw && secs < kFig3Seconds;
  return {ok, "SGW relative spread " + fmt(sgw_spread) + ", DSE Spearman " + fmt(rho) + "; CV dse " + fmt(cv_dse) +
                  ", ri_sgw " + fmt(cv_ri) + ", sgw " + fmt(cv_sgw) + "; " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 6. Cross-dimensional generative model.

Line criterion_genmodel() {
  const auto start = Clock::now();
  auto spec = experiments::ExperimentSpec::defaults("genmodel");
  spec.seeds.clear();
  for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
  int covered = 0, loss_ok = 0;
  std::ostringstream per;
  for (auto seed : spec.seeds) {
    const auto r = experiments::run_genmodel_single(spec, seed);
    const auto& tr = r.loss_trace;
    const double first = std::accumulate(tr.begin(), tr.begin() + 100, 0.0) / 100.0;
    const double last = std::accumulate(tr.end() - 100, tr.end(), 0.0) / 100.0;
    const bool cov = r.coverage.min_fraction() >= kCoverageMin;
    covered += cov;
    loss_ok += last <= kLossRatio * first;
    per << " " << seed << ":" << fmt(r.coverage.min_fraction()) << "/" << fmt(last / first);
  }
  const double secs = seconds_since(start);
  return {covered >= kCoverageSeedsRequired && loss_ok >= kCoverageSeedsRequired && secs < kFig5Seconds,
          std::to_string(covered) + "/10 seeds cover every mode, " + std::to_string(loss_ok) +
              "/10 with final/initial loss <= 0.5; seed:min-coverage/loss-ratio" + per.str() + "; " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 7. Runtime scaling.

Line criterion_scaling() {
  const auto start = Clock::now();
  auto spec = experiments::ExperimentSpec::defaults("scaling");
  spec.grid = {500, 2000};
  const auto t = experiments::run_scaling(spec);
  auto ratio = [&](const std::string& m) {
    const auto v = t.column("mean_ms", "method", m);
    return v[1] / v[0];
  };
  const double dse = ratio("dse"), sgw = ratio("sgw"), gw = ratio("entropic_gw");
  const double secs = seconds_since(start);
  return {dse <= kLinearRatioMax && sgw <= kLinearRatioMax && gw >= kGwRatioMin && secs < kFig6Seconds,
          "time(2000)/time(500): dse " + fmt(dse) + ", sgw " + fmt(sgw) + ", entropic_gw " + fmt(gw) + "; " + fmt(secs) +
              " s"};
}

// ---------------------------------------------------------------------------
// 8. 1-NN classification under isometries.

Line criterion_knn() {
  const auto start = Clock::now();
  const auto spec = experiments::ExperimentSpec::defaults("knn");
  const auto t = experiments::run_knn(spec);
  const double gw = experiments::mean_of(t.column("accuracy", "method", "entropic_gw"));
  const double dse = experiments::mean_of(t.column("accuracy", "method", "dse"));
  const double sgw = experiments::mean_of(t.column("accuracy", "method", "sgw"));
  const double secs = seconds_since(start);
  return {gw >= dse && dse >= sgw && gw - dse <= kKnnGap && secs < kFig7Seconds,
          "mean accuracy entropic_gw " + fmt(gw) + ", dse " + fmt(dse) + ", sgw " + fmt(sgw) + "; " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// 9. Byte-identical CLI outputs.

namespace fs = std::filesystem;

int shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Concatenated contents of every regular file under dir, in path order.
std::string snapshot_dir(const fs::path& dir, const std::set<std::string>& timing_files) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    std::string text = io::read_file(f.string());
    if (timing_files.count(f.filename().string())) {
      // Wall-clock columns differ by nature; keep only n, method and pairs.
      std::istringstream is(text);
      std::string line, kept;
      while (std::getline(is, line)) {
        const auto cells = io::split(line, ',');
        kept += cells[0] + "," + cells[1] + "," + cells.back() + "\n";
      }
      text = kept;
    }
    all += fs::relative(f, dir).string() + "\n" + text;
  }
  return all;
}

Line criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / ("heterot_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = HETEROT_CLI_PATH;
  io::write_file((root / "x.csv").string(), io::format_point_cloud(datasets::make_spiral(120, 0.0, 1)));
  io::write_file((root / "y.csv").string(), io::format_point_cloud(datasets::make_spiral(120, 0.9, 2)));
  io::write_file((root / "z.csv").string(),
                 io::format_point_cloud(datasets::make_gaussian_mixture(3, 4, 120, 3).samples));

  std::vector<std::string> commands;
  const std::string xs = (root / "x.csv").string(), ys = (root / "y.csv").string(), zs = (root / "z.csv").string();
  for (const char* m : {"dse", "sw", "max_sw", "dsw", "sgw", "ri_sgw", "entropic_gw"}) {
    for (const char* f : {"json", "csv"}) {
      commands.push_back("compute --method " + std::string(m) + " --input-x " + xs + " --input-y " + ys +
                         " --seed 11 --format " + f + " --output {out}/compute_" + m + "." + f);
    }
  }
  commands.push_back("compute --method dse --input-x " + xs + " --input-y " + zs +
                     " --seed 12 --output {out}/cross.json --checkpoint {out}/cross_ck.json");
  commands.push_back("compute --method sgw --input-x " + xs + " --input-y " + zs + " --seed 12 --output {out}/sgw.json");
  for (const char* kind : {"translation", "rotation", "genmodel", "scaling", "knn"}) {
    commands.push_back("experiment " + std::string(kind) + " --quick --seed 5 --output {out}/exp");
  }
  commands.push_back("selftest --quick --seed 3 > {out}/selftest.txt");

  int failures = 0, bad_exit = 0;
  std::string first_diff;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::string snaps[2];
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path out = root / ("run" + std::to_string(i) + "_" + std::to_string(rep));
      fs::create_directories(out);
      std::string cmd = commands[i];
      for (std::size_t at; (at = cmd.find("{out}")) != std::string::npos;) cmd.replace(at, 5, out.string());
      if (cmd.find(" > ") == std::string::npos) cmd += " > " + (out / "stdout.txt").string();
      const int rc = shell(cli + " " + cmd + " 2> " + (root / "stderr.txt").string());
      if (rc != 0) ++bad_exit;
      std::string s = snapshot_dir(out, {"scaling.csv"});
      // The experiment stdout names the output directory, which differs per repetition.
      const std::string prefix = out.string();
      for (std::size_t at; (at = s.find(prefix)) != std::string::npos;) s.replace(at, prefix.size(), "{out}");
      snaps[rep] = s;
    }
    if (snaps[0] != snaps[1]) {
      ++failures;
      if (first_diff.empty()) first_diff = commands[i];
    }
  }
  fs::remove_all(root);
  return {failures == 0 && bad_exit == 0,
          std::to_string(commands.size()) + " invocations run twice, " + std::to_string(failures) +
              " differing, " + std::to_string(bad_exit) + " nonzero exits" +
              (first_diff.empty() ? "" : "; first difference: " + first_diff)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Line()>>> criteria{
      {"oracle equivalence", criterion_oracles},
      {"gradient correctness", criterion_gradients},
      {"discrepancy properties", criterion_properties},
      {"uniform direction inner products", criterion_gamma},
      {"translation and rotation sweeps", criterion_sweeps},
      {"cross-dimensional generator", criterion_genmodel},
      {"runtime scaling", criterion_scaling},
      {"1-NN under isometries", criterion_knn},
      {"determinism", criterion_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Line l;
    try {
      l = criteria[i].second();
    } catch (const std::exception& e) {
      l = {false, std::string("exception: ") + e.what()};
    }
    report(id, criteria[i].first, l);
    failed += !l.pass;
  }
  return failed == 0 ? 0 : 1;
}
