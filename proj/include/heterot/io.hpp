#pragma once

// File formats: point-cloud CSV, sectioned key=value configs, JSON checkpoints
// and manifests. Floats are always written with 17 significant digits.

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "heterot/dse.hpp"
#include "heterot/errors.hpp"
#include "heterot/experiments.hpp"
#include "heterot/nn.hpp"
#include "heterot/point_cloud.hpp"

namespace heterot::io {

using Json = nlohmann::json;

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": '" + s + "' is not a number");
  }
}

inline long long parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": '" + s + "' is not an integer");
  }
}

inline bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ParseError(where + ": '" + s + "' is not a boolean");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Point clouds.

/// One point per row, comma separated, '#' starts a comment line.
inline PointCloud parse_point_cloud(const std::string& text, const std::string& name = "input") {
  std::vector<std::vector<double>> rows;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto where = name + ":" + std::to_string(lineno);
    std::vector<double> row;
    for (const auto& cell : split(t, ',')) {
      const double v = parse_double(cell, where);
      if (!std::isfinite(v)) throw ParseError(where + ": non-finite value");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(where + ": expected " + std::to_string(rows.front().size()) + " columns, found " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name + ": no points");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return PointCloud(std::move(m));
}

inline PointCloud read_point_cloud(const std::string& path) { return parse_point_cloud(read_file(path), path); }

inline std::string format_point_cloud(const PointCloud& x) {
  std::ostringstream os;
  const auto& p = x.points();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) os << (j ? "," : "") << experiments::format_number(p(i, j));
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Sectioned key=value configs.

class Config {
 public:
  using Section = std::map<std::string, std::string>;

  static Config parse(const std::string& text, const std::string& name = "config") {
    Config c;
    std::string section;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      const auto where = name + ":" + std::to_string(lineno);
      if (t.front() == '[') {
        if (t.back() != ']') throw ParseError(where + ": unterminated section header");
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw ParseError(where + ": empty section name");
        c.sections_[section];
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
      const auto key = trim(t.substr(0, eq));
      if (key.empty()) throw ParseError(where + ": empty key");
      c.sections_[section][key] = trim(t.substr(eq + 1));
    }
    return c;
  }

  static Config load(const std::string& path) { return parse(read_file(path), path); }

  const std::map<std::string, Section>& sections() const { return sections_; }
  bool has(const std::string& section) const { return sections_.count(section) > 0; }
  const Section& section(const std::string& name) const {
    static const Section empty;
    const auto it = sections_.find(name);
    return it == sections_.end() ? empty : it->second;
  }
  void set(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
  }

 private:
  std::map<std::string, Section> sections_;
};

namespace detail {

template <typename T>
std::vector<T> parse_list(const std::string& s, const std::string& where) {
  std::vector<T> out;
  for (const auto& item : split(s, ',')) {
    if (item.empty()) throw ParseError(where + ": empty list element");
    if constexpr (std::is_floating_point_v<T>) {
      out.push_back(parse_double(item, where));
    } else if constexpr (std::is_integral_v<T>) {
      const auto v = parse_int(item, where);
      if (std::is_unsigned_v<T> && v < 0) throw ParseError(where + ": negative value");
      out.push_back(static_cast<T>(v));
    } else {
      out.push_back(item);
    }
  }
  return out;
}

}  // namespace detail

/// Applies one "section.key = value" assignment to a spec. Unknown keys are errors.
inline void apply_setting(experiments::ExperimentSpec& s, const std::string& section, const std::string& key,
                          const std::string& v) {
  const auto where = "[" + section + "] " + key;
  auto i = [&] { return static_cast<int>(parse_int(v, where)); };
  auto d = [&] { return parse_double(v, where); };
  auto& c = s.dse;
  if (section == "experiment") {
    if (key == "kind") s.kind = v;
    else if (key == "methods") s.methods = detail::parse_list<std::string>(v, where);
    else if (key == "grid") s.grid = detail::parse_list<double>(v, where);
    else if (key == "samples") s.samples = i();
    else if (key == "seeds") s.seeds = detail::parse_list<std::uint64_t>(v, where);
    else if (key == "r" || key == "order") s.r = d();
    else if (key == "jobs") s.jobs = i();
    else throw ParseError("unknown key " + where);
  } else if (section == "dse") {
    if (key == "slices") c.slices = i();
    else if (key == "latent_dim") c.latent_dim = i();
    else if (key == "iterations") c.iterations = i();
    else if (key == "inner_iterations") c.inner_iterations = i();
    else if (key == "lambda_c") c.lambda_c = d();
    else if (key == "lambda_a") c.lambda_a = d();
    else if (key == "lr") c.lr_f = c.lr_embed = d();
    else if (key == "lr_f") c.lr_f = d();
    else if (key == "lr_embed") c.lr_embed = d();
    else if (key == "hidden_f") c.hidden_f = detail::parse_list<int>(v, where);
    else if (key == "hidden_embed") c.hidden_embed = detail::parse_list<int>(v, where);
    else if (key == "signed_cosine_penalty") c.signed_cosine_penalty = parse_bool(v, where);
    else if (key == "tie_equal_dims") c.tie_equal_dims = parse_bool(v, where);
    else throw ParseError("unknown key " + where);
  } else if (section == "sgw" || section == "sw") {
    if (key == "slices") s.sgw.slices = i();
    else throw ParseError("unknown key " + where);
  } else if (section == "ri_sgw") {
    if (key == "slices") s.ri_sgw.slices = i();
    else if (key == "lr") s.ri_sgw.lr = d();
    else if (key == "iterations") s.ri_sgw.iterations = i();
    else if (key == "restarts") s.ri_sgw.restarts = i();
    else throw ParseError("unknown key " + where);
  } else if (section == "entropic_gw") {
    if (key == "outer_iterations") s.entropic_gw.outer_iterations = i();
    else if (key == "inner_iterations") s.entropic_gw.inner_iterations = i();
    else if (key == "epsilon") s.entropic_gw.epsilon = d();
    else throw ParseError("unknown key " + where);
  } else if (section == "genmodel") {
    auto& g = s.genmodel;
    if (key == "target_dim") g.target_dim = i();
    else if (key == "gen_dim") g.gen_dim = i();
    else if (key == "modes") g.modes = i();
    else if (key == "target_samples") g.target_samples = i();
    else if (key == "iterations") g.iterations = i();
    else if (key == "batch") g.batch = i();
    else if (key == "lr") g.lr = d();
    else if (key == "output_l2") g.output_l2 = d();
    else if (key == "snapshot_points") g.snapshot_points = i();
    else if (key == "snapshots") g.snapshots = i();
    else if (key == "coverage_radius") g.coverage_radius = d();
    else if (key == "loss") g.loss = v;
    else throw ParseError("unknown key " + where);
  } else if (section == "scaling") {
    if (key == "pairs") s.scaling.pairs = i();
    else if (key == "gw_outer_iterations") s.scaling.gw_outer_iterations = i();
    else throw ParseError("unknown key " + where);
  } else if (section == "knn") {
    if (key == "runs") s.knn.runs = i();
    else if (key == "points") s.knn.points = i();
    else if (key == "strengths") s.knn.strengths = detail::parse_list<double>(v, where);
    else throw ParseError("unknown key " + where);
  } else if (section == "compute") {
    // Consumed by the command line front end.
  } else {
    throw ParseError("unknown config section [" + section + "]");
  }
}

/// Builds a spec from kind defaults, then the config's settings in section order.
inline experiments::ExperimentSpec spec_from_config(const Config& cfg, const std::string& default_kind = "translation") {
  const auto& top = cfg.section("experiment");
  const auto kind_it = top.find("kind");
  auto spec = experiments::ExperimentSpec::defaults(kind_it == top.end() ? default_kind : kind_it->second);
  for (const auto& [section, entries] : cfg.sections()) {
    if (section.empty() && !entries.empty()) throw ParseError("config keys must appear inside a [section]");
    for (const auto& [key, value] : entries) apply_setting(spec, section, key, value);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// JSON with 17 significant digits.

/// Serializes like nlohmann::json::dump but prints every float with %.17g.
inline void dump17(const Json& j, std::ostringstream& os, int indent, int depth) {
  const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close_pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << '{' << nl;
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ',' << nl;
        first = false;
        os << pad << Json(it.key()).dump() << (indent > 0 ? ": " : ":");
        dump17(it.value(), os, indent, depth + 1);
      }
      os << nl << close_pad << '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
      os << '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << (flat || indent == 0 ? "," : ",");
        if (!flat) os << nl << pad;
        dump17(j[i], os, indent, depth + 1);
      }
      if (!flat) os << nl << close_pad;
      os << ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw NumericalError("cannot serialize non-finite number");
      os << experiments::format_number(v);
      return;
    }
    default:
      os << j.dump();
  }
}

inline std::string dump17(const Json& j, int indent = 2) {
  std::ostringstream os;
  dump17(j, os, indent, 0);
  return os.str();
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ParseError(what + ": expected a non-empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != j[0].size()) throw ParseError(what + ": ragged matrix");
    for (std::size_t k = 0; k < j[i].size(); ++k) {
      if (!j[i][k].is_number()) throw ParseError(what + ": non-numeric entry");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

inline Json config_json(const dse::DseConfig& c) {
  return Json{{"r", c.r},
              {"slices", c.slices},
              {"latent_dim", c.latent_dim},
              {"iterations", c.iterations},
              {"inner_iterations", c.inner_iterations},
              {"lambda_c", c.lambda_c},
              {"lambda_a", c.lambda_a},
              {"lr_f", c.lr_f},
              {"lr_embed", c.lr_embed},
              {"seed", c.seed},
              {"hidden_f", c.hidden_f},
              {"hidden_embed", c.hidden_embed},
              {"signed_cosine_penalty", c.signed_cosine_penalty},
              {"tie_equal_dims", c.tie_equal_dims}};
}

inline dse::DseConfig config_from_json(const Json& j) {
  try {
    dse::DseConfig c;
    c.r = j.at("r").get<double>();
    c.slices = j.at("slices").get<int>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.iterations = j.at("iterations").get<int>();
    c.inner_iterations = j.at("inner_iterations").get<int>();
    c.lambda_c = j.at("lambda_c").get<double>();
    c.lambda_a = j.at("lambda_a").get<double>();
    c.lr_f = j.at("lr_f").get<double>();
    c.lr_embed = j.at("lr_embed").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.hidden_f = j.at("hidden_f").get<std::vector<int>>();
    c.hidden_embed = j.at("hidden_embed").get<std::vector<int>>();
    c.signed_cosine_penalty = j.at("signed_cosine_penalty").get<bool>();
    c.tie_equal_dims = j.at("tie_equal_dims").get<bool>();
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
}

inline Json net_json(const nn::MlpNet& net) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < net.weights().size(); ++l) {
    layers.push_back(Json{{"weight", matrix_json(net.weights()[l].value())},
                          {"bias", matrix_json(net.biases()[l].value()).at(0)}});
  }
  return Json{{"layer_dims", net.layer_dims()}, {"head", nn::to_string(net.head())}, {"layers", layers}};
}

inline nn::MlpNet net_from_json(const Json& j, const std::string& what) {
  if (!j.is_object()) throw ParseError(what + ": expected an object");
  const auto head_name = j.value("head", std::string());
  nn::OutputHead head;
  if (head_name == "identity") head = nn::OutputHead::identity;
  else if (head_name == "sphere_normalize") head = nn::OutputHead::sphere_normalize;
  else throw ParseError(what + ": unknown head '" + head_name + "'");
  std::vector<Eigen::MatrixXd> w, b;
  if (!j.contains("layers") || !j["layers"].is_array()) throw ParseError(what + ": missing layers");
  for (const auto& layer : j["layers"]) {
    if (!layer.contains("weight") || !layer.contains("bias")) throw ParseError(what + ": layer needs weight and bias");
    w.push_back(matrix_from_json(layer["weight"], what + " weight"));
    b.push_back(matrix_from_json(Json::array({layer["bias"]}), what + " bias"));
  }
  try {
    return nn::MlpNet::from_parameters(std::move(w), std::move(b), head);
  } catch (const DimensionError& e) {
    throw ParseError(what + ": " + e.what());
  }
}

/// {config, net_f, net_phi, net_psi, base_directions, traces}; embedding nets are null for identity embeddings.
inline Json checkpoint_json(const dse::DseState& state, const dse::DseResult& result) {
  Json j;
  j["config"] = config_json(result.config);
  j["net_f"] = net_json(state.f());
  j["net_phi"] = state.phi() ? net_json(*state.phi()) : Json(nullptr);
  j["net_psi"] = state.psi() ? net_json(*state.psi()) : Json(nullptr);
  j["base_directions"] = matrix_json(state.base_directions().matrix());
  j["traces"] = Json{{"l1", result.trace_l1}, {"l2", result.trace_l2}, {"l3", result.trace_l3}};
  j["value"] = result.value;
  return j;
}

struct Checkpoint {
  dse::DseConfig config;
  nn::MlpNet net_f;
  std::optional<nn::MlpNet> net_phi, net_psi;
  Eigen::MatrixXd base_directions;
  std::vector<double> trace_l1, trace_l2, trace_l3;
};

inline Checkpoint checkpoint_from_json(const Json& j) {
  Checkpoint c;
  if (!j.is_object()) throw ParseError("checkpoint: expected a JSON object");
  for (const char* key : {"config", "net_f", "net_phi", "net_psi", "base_directions", "traces"}) {
    if (!j.contains(key)) throw ParseError(std::string("checkpoint: missing ") + key);
  }
  c.config = config_from_json(j["config"]);
  c.net_f = net_from_json(j["net_f"], "net_f");
  if (!j["net_phi"].is_null()) c.net_phi = net_from_json(j["net_phi"], "net_phi");
  if (!j["net_psi"].is_null()) c.net_psi = net_from_json(j["net_psi"], "net_psi");
  c.base_directions = matrix_from_json(j["base_directions"], "base_directions");
  try {
    c.trace_l1 = j["traces"].at("l1").get<std::vector<double>>();
    c.trace_l2 = j["traces"].at("l2").get<std::vector<double>>();
    c.trace_l3 = j["traces"].at("l3").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("checkpoint traces: ") + e.what());
  }
  return c;
}

/// Restores a state (nets and frozen directions) from a checkpoint for inputs of dims p and q.
inline dse::DseState restore_state(const Checkpoint& c, int p, int q) {
  if (c.net_phi.has_value() != c.net_psi.has_value()) throw ParseError("checkpoint: net_phi and net_psi must both be set");
  if (c.net_phi && (c.net_phi->output_dim() != p || c.net_psi->output_dim() != q)) {
    throw DimensionError("checkpoint embeddings map to dims " + std::to_string(c.net_phi->output_dim()) + " and " +
                         std::to_string(c.net_psi->output_dim()) + ", inputs have " + std::to_string(p) + " and " +
                         std::to_string(q));
  }
  dse::DseState s = c.net_phi ? dse::DseState(p, q, c.config) : dse::DseState::identity_embeddings(p, c.config);
  s.set_nets(c.net_f, c.net_phi, c.net_psi);
  s.set_base_directions(sphere::DirectionSet(c.base_directions));
  return s;
}

}  // namespace heterot::io
