#pragma once

// Command-line front end: `compute`, `experiment` and `selftest`.
//
// Exit codes: 0 success, 1 selftest failure, 2 parse or config error,
// 3 method error (bad dimensions, unequal counts, unknown method),
// 4 numerical abort. Errors print one line on stderr:
//   heterot: error code=<c> kind=<parse|method|numerical> message="<text>"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "heterot/baselines.hpp"
#include "heterot/dse.hpp"
#include "heterot/errors.hpp"
#include "heterot/experiments.hpp"
#include "heterot/io.hpp"
#include "heterot/selftest.hpp"
#include "heterot/version.hpp"

namespace heterot::cli {

enum ExitCode : int { kOk = 0, kSelftestFailed = 1, kParseError = 2, kMethodError = 3, kNumericalError = 4 };

/// Flags shared by `compute` and `experiment`; unset values leave the config alone.
struct Overrides {
  std::optional<std::string> method;
  std::optional<double> order;
  std::optional<int> slices, latent_dim, iters, inner_iters, jobs;
  std::optional<double> lambda_c, lambda_a, lr;
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string input_x, input_y;
  std::string output;
  std::string format = "json";
  bool quick = false;
  bool timing = false;
};

inline void add_common_flags(CLI::App& app, Overrides& o) {
  app.add_option("--method", o.method, "Discrepancy: dse, sw, max_sw, dsw, sgw, ri_sgw, entropic_gw");
  app.add_option("--order", o.order, "Order r >= 1 of the transport cost");
  app.add_option("--slices", o.slices, "Number of slices K");
  app.add_option("--latent-dim", o.latent_dim, "DSE latent dimension d");
  app.add_option("--iters", o.iters, "DSE outer iterations T (iteration budget for iterative baselines)");
  app.add_option("--inner-iters", o.inner_iters, "DSE inner iterations N");
  app.add_option("--lambda-c", o.lambda_c, "Weight of the cosine penalty L2");
  app.add_option("--lambda-a", o.lambda_a, "Weight of the angle penalty L3");
  app.add_option("--lr", o.lr, "Adam step size");
  app.add_option("--seed", o.seed, "Seed (falls back to HETEROT_SEED)");
  app.add_option("--config", o.config_path, "Sectioned key=value config file");
  app.add_option("--output", o.output, "Output file (compute) or directory (experiment)");
  app.add_option("--jobs", o.jobs, "Parallel workers for independent cells");
  app.add_flag("--quick", o.quick, "Reduced budgets");
  app.add_flag("--timing", o.timing, "Include wall-clock times in reports");
}

inline std::optional<std::uint64_t> resolve_seed(const Overrides& o) {
  if (o.seed) return o.seed;
  if (const char* env = std::getenv("HETEROT_SEED")) {
    const std::string s = io::trim(env);
    if (s.empty() || s[0] == '-') throw ParseError("HETEROT_SEED must be a non-negative integer, got '" + s + "'");
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError("HETEROT_SEED must be a non-negative integer, got '" + s + "'");
    }
  }
  return std::nullopt;
}

/// DSE-level flags; these apply to every method that shares the parameter.
inline void apply_dse_overrides(experiments::ExperimentSpec& s, const Overrides& o) {
  if (o.order) s.r = *o.order;
  if (o.slices) s.dse.slices = *o.slices;
  if (o.latent_dim) s.dse.latent_dim = *o.latent_dim;
  if (o.iters) s.dse.iterations = *o.iters;
  if (o.inner_iters) s.dse.inner_iterations = *o.inner_iters;
  if (o.lambda_c) s.dse.lambda_c = *o.lambda_c;
  if (o.lambda_a) s.dse.lambda_a = *o.lambda_a;
  if (o.lr) s.dse.lr_f = s.dse.lr_embed = *o.lr;
  if (o.jobs) s.jobs = *o.jobs;
  if (s.r < 1.0) throw ParseError("--order must be >= 1");
  if (s.jobs < 1) throw ParseError("--jobs must be >= 1");
}

inline void error_line(std::ostream& err, int code, const char* kind, const std::string& message) {
  std::string m = message;
  for (char& c : m) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  err << "heterot: error code=" << code << " kind=" << kind << " message=\"" << m << "\"\n";
}

// ---------------------------------------------------------------------------
// compute

inline io::Json method_config(const std::string& method, const experiments::ExperimentSpec& s, std::uint64_t seed) {
  if (method == "dse") {
    auto c = s.dse;
    c.r = s.r;
    c.seed = seed;
    return io::config_json(c);
  }
  if (method == "sw" || method == "sgw") return io::Json{{"r", s.r}, {"slices", s.sgw.slices}};
  if (method == "max_sw") return io::Json{{"r", s.r}};
  if (method == "dsw") {
    return io::Json{{"r", s.r},           {"slices", s.dse.slices},     {"iterations", s.dse.iterations},
                    {"lambda_c", s.dse.lambda_c}, {"lr", s.dse.lr_f}, {"hidden", s.dse.hidden_f}};
  }
  if (method == "ri_sgw") {
    return io::Json{{"r", s.r},
                    {"slices", s.ri_sgw.slices},
                    {"lr", s.ri_sgw.lr},
                    {"iterations", s.ri_sgw.iterations},
                    {"restarts", s.ri_sgw.restarts}};
  }
  return io::Json{{"outer_iterations", s.entropic_gw.outer_iterations},
                  {"inner_iterations", s.entropic_gw.inner_iterations},
                  {"epsilon", s.entropic_gw.epsilon}};
}

inline std::string csv_cell(const io::Json& v) {
  if (v.is_number_float()) return experiments::format_number(v.get<double>());
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + csv_cell(v[i]);
    return out;
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

inline int cmd_compute(const Overrides& o, const std::string& checkpoint_path, std::ostream& out) {
  if (!o.method) throw ParseError("compute needs --method");
  const std::string method = *o.method;
  const auto& known = experiments::known_methods();
  if (std::find(known.begin(), known.end(), method) == known.end()) throw MethodError("unknown method '" + method + "'");
  if (o.format != "json" && o.format != "csv") throw ParseError("--format must be json or csv");

  auto spec = o.config_path.empty() ? experiments::ExperimentSpec{} : io::spec_from_config(io::Config::load(o.config_path));
  apply_dse_overrides(spec, o);
  // Baseline-specific meaning of the shared flags.
  if (o.slices) spec.sgw.slices = spec.ri_sgw.slices = *o.slices;
  if (o.iters) {
    if (method == "ri_sgw") spec.ri_sgw.iterations = *o.iters;
    if (method == "entropic_gw") spec.entropic_gw.outer_iterations = *o.iters;
  }
  if (o.inner_iters && method == "entropic_gw") spec.entropic_gw.inner_iterations = *o.inner_iters;
  if (o.lr && method == "ri_sgw") spec.ri_sgw.lr = *o.lr;
  spec.dse.validate();

  const auto seed = resolve_seed(o);
  if (!seed) throw ParseError("a seed is required: pass --seed or set HETEROT_SEED");

  PointCloud x = io::read_point_cloud(o.input_x);
  PointCloud y = io::read_point_cloud(o.input_y);
  const auto n = x.size(), m = y.size();
  if ((method == "dse" || method == "dsw") && n != m) std::tie(x, y) = equalize_sizes(x, y, mix_seed(*seed, 0xe9));

  const auto start = std::chrono::steady_clock::now();
  double value = 0.0;
  if (method == "dse") {
    auto cfg = spec.dse;
    cfg.r = spec.r;
    cfg.seed = *seed;
    dse::DseState state(static_cast<int>(x.dim()), static_cast<int>(y.dim()), cfg);
    const auto res = dse::dse_fit(x, y, cfg, state);
    value = res.value;
    if (!checkpoint_path.empty()) io::write_file(checkpoint_path, io::dump17(io::checkpoint_json(state, res)) + "\n");
  } else {
    if (!checkpoint_path.empty()) throw ParseError("--checkpoint is only available for --method dse");
    value = experiments::compute_method(method, x, y, spec, *seed);
  }
  if (!std::isfinite(value)) throw NumericalError(method + " produced a non-finite value");
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  io::Json report = io::Json::object();
  report["method"] = method;
  report["value"] = value;
  report["n"] = n;
  report["m"] = m;
  report["p"] = x.dim();
  report["q"] = y.dim();
  report["seed"] = *seed;
  report["config"] = method_config(method, spec, *seed);
  if (o.timing) report["wall_time_ms"] = ms;

  std::string text;
  if (o.format == "json") {
    text = io::dump17(report) + "\n";
  } else {
    std::vector<std::string> header{"method", "value", "n", "m", "p", "q", "seed"};
    std::vector<std::string> row{method, experiments::format_number(value), std::to_string(n), std::to_string(m),
                                 std::to_string(x.dim()), std::to_string(y.dim()), std::to_string(*seed)};
    if (o.timing) {
      header.push_back("wall_time_ms");
      row.push_back(experiments::format_number(ms));
    }
    for (auto it = report["config"].begin(); it != report["config"].end(); ++it) {
      header.push_back("config." + it.key());
      row.push_back(csv_cell(it.value()));
    }
    experiments::Table t{header, {}};
    t.add(row);
    text = t.to_csv();
  }
  if (o.output.empty()) {
    out << text;
  } else {
    io::write_file(o.output, text);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// experiment

/// Shrinks budgets for smoke runs.
inline void make_quick(experiments::ExperimentSpec& s) {
  s.samples = std::min(s.samples, 100);
  s.seeds.resize(1);
  s.dse.iterations = std::min(s.dse.iterations, 10);
  s.ri_sgw.iterations = std::min(s.ri_sgw.iterations, 50);
  s.entropic_gw.outer_iterations = std::min(s.entropic_gw.outer_iterations, 20);
  s.genmodel.iterations = std::min(s.genmodel.iterations, 200);
  s.genmodel.target_samples = std::min(s.genmodel.target_samples, 300);
  s.genmodel.batch = std::min(s.genmodel.batch, 100);
  s.genmodel.snapshot_points = std::min(s.genmodel.snapshot_points, 200);
  s.scaling.pairs = std::min(s.scaling.pairs, 3);
  s.scaling.gw_outer_iterations = std::min(s.scaling.gw_outer_iterations, 5);
  std::vector<double> small;
  for (double n : s.grid) {
    if (s.kind != "scaling" || n <= 250) small.push_back(n);
  }
  if (s.kind == "scaling") s.grid = small.empty() ? std::vector<double>{100} : small;
  s.knn.runs = std::min(s.knn.runs, 1);
  s.knn.points = std::min(s.knn.points, 50);
}

inline std::vector<std::pair<std::string, experiments::Table>> run_experiment(const experiments::ExperimentSpec& s) {
  if (s.kind == "translation") return {{"translation.csv", experiments::run_translation_sweep(s)}};
  if (s.kind == "rotation") return {{"rotation.csv", experiments::run_rotation_sweep(s)}};
  if (s.kind == "scaling") return {{"scaling.csv", experiments::run_scaling(s)}};
  if (s.kind == "knn") return {{"knn.csv", experiments::run_knn(s)}};
  auto g = experiments::run_genmodel(s);
  return {{"genmodel_loss.csv", std::move(g.losses)},
          {"genmodel_coverage.csv", std::move(g.coverage)},
          {"genmodel_snapshots.csv", std::move(g.snapshots)}};
}

inline int cmd_experiment(const Overrides& o, const std::string& kind, std::ostream& out) {
  io::Config cfg;
  if (!o.config_path.empty()) cfg = io::Config::load(o.config_path);
  if (!kind.empty()) {
    const auto& top = cfg.section("experiment");
    const auto it = top.find("kind");
    if (it != top.end() && it->second != kind) {
      throw ParseError("experiment kind '" + kind + "' conflicts with config kind '" + it->second + "'");
    }
    cfg.set("experiment", "kind", kind);
  }
  if (!cfg.section("experiment").count("kind")) throw ParseError("experiment needs a kind (positional or [experiment] kind)");
  auto spec = io::spec_from_config(cfg);
  apply_dse_overrides(spec, o);
  if (o.method) spec.methods = io::detail::parse_list<std::string>(*o.method, "--method");
  if (o.seed) {
    spec.seeds = {*o.seed};
  } else if (!cfg.section("experiment").count("seeds")) {
    const auto env = resolve_seed(o);
    if (!env) throw ParseError("a seed is required: [experiment] seeds, --seed or HETEROT_SEED");
    spec.seeds = {*env};
  }
  if (o.quick) make_quick(spec);
  for (const auto& m : spec.methods) {
    const auto& known = experiments::known_methods();
    if (std::find(known.begin(), known.end(), m) == known.end()) throw ParseError("unknown method '" + m + "' in spec");
  }
  spec.validate();

  const std::string hash = spec.hash();
  const std::filesystem::path dir = std::filesystem::path(o.output.empty() ? "results" : o.output) / hash;
  std::filesystem::create_directories(dir);

  const auto start = std::chrono::steady_clock::now();
  const auto tables = run_experiment(spec);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  io::Json files = io::Json::array();
  for (const auto& [name, table] : tables) {
    io::write_file((dir / name).string(), table.to_csv());
    files.push_back(name);
  }
  io::Json spec_fields = io::Json::object();
  std::istringstream lines(spec.canonical());
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    spec_fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  io::Json manifest = io::Json::object();
  manifest["spec_hash"] = hash;
  manifest["kind"] = spec.kind;
  manifest["seeds"] = spec.seeds;
  manifest["versions"] = io::Json{{"heterot", kVersion}, {"eigen", eigen_version()}, {"compiler", compiler_version()}};
  manifest["spec"] = spec_fields;
  manifest["files"] = files;
  if (o.timing) manifest["wall_time_ms"] = ms;
  io::write_file((dir / "manifest.json").string(), io::dump17(manifest) + "\n");
  out << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// selftest

inline int cmd_selftest(bool quick, std::uint64_t seed, const std::string& fault, std::ostream& out) {
  selftest::Options opt;
  opt.quick = quick;
  opt.seed = seed;
  if (fault == "grad-sign") {
    opt.flip_wasserstein_grad_sign = true;
  } else if (!fault.empty()) {
    throw ParseError("unknown fault '" + fault + "' (known: grad-sign)");
  }
  bool all = true;
  for (const auto& c : selftest::run_all(opt)) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
    all = all && c.passed;
  }
  out << (all ? "selftest: all checks passed" : "selftest: FAILED") << "\n";
  return all ? kOk : kSelftestFailed;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"heterot: discrepancies between distributions in different spaces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Overrides compute_o, exp_o;
  std::string checkpoint;
  auto* compute = app.add_subcommand("compute", "Discrepancy between two point-cloud CSV files");
  add_common_flags(*compute, compute_o);
  compute->add_option("--input-x", compute_o.input_x, "First point cloud (CSV)")->required();
  compute->add_option("--input-y", compute_o.input_y, "Second point cloud (CSV)")->required();
  compute->add_option("--format", compute_o.format, "Report format: json or csv");
  compute->add_option("--checkpoint", checkpoint, "Write the trained DSE state as JSON");

  std::string kind;
  auto* experiment = app.add_subcommand("experiment", "Run an experiment driver");
  add_common_flags(*experiment, exp_o);
  experiment->add_option("kind", kind, "translation, rotation, genmodel, scaling or knn");

  bool quick = false;
  std::optional<std::uint64_t> st_seed;
  std::string fault;
  auto* self = app.add_subcommand("selftest", "Oracle, gradient and property self-checks");
  self->add_flag("--quick", quick, "Reduced budgets");
  self->add_option("--seed", st_seed, "Seed for the randomized checks (falls back to HETEROT_SEED, then 0)");
  self->add_option("--inject-fault", fault, "Test fixture: grad-sign flips the 1D Wasserstein gradient");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      throw ParseError(e.what());
    }
    if (*compute) return cmd_compute(compute_o, checkpoint, out);
    if (*experiment) return cmd_experiment(exp_o, kind, out);
    Overrides so;
    so.seed = st_seed;
    return cmd_selftest(quick, resolve_seed(so).value_or(0), fault, out);
  } catch (const ParseError& e) {
    error_line(err, kParseError, "parse", e.what());
    return kParseError;
  } catch (const NumericalError& e) {
    error_line(err, kNumericalError, "numerical", e.what());
    return kNumericalError;
  } catch (const std::invalid_argument& e) {  // MethodError, DimensionError
    error_line(err, kMethodError, "method", e.what());
    return kMethodError;
  } catch (const std::filesystem::filesystem_error& e) {
    error_line(err, kParseError, "parse", e.what());
    return kParseError;
  } catch (const std::exception& e) {
    error_line(err, kMethodError, "method", e.what());
    return kMethodError;
  }
}

}  // namespace heterot::cli
