// SPDX-License-Identifier: Apache-2.0
#include "bbmf/config_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

extern char** environ;

namespace bbmf {

namespace pt = boost::property_tree;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<double> parse_list(const std::string& field, const std::string& text) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream is(cleaned);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError(field, "not a number: '" + tok + "'");
    }
  }
  return out;
}

double parse_scalar(const std::string& field, const std::string& text) {
  auto v = parse_list(field, text);
  if (v.size() != 1) throw ConfigError(field, "expected a single number");
  return v.front();
}

std::vector<PotentialPiece> parse_pieces(const std::string& text) {
  std::vector<PotentialPiece> pieces;
  std::string chunk;
  std::string normalized = text;
  std::replace(normalized.begin(), normalized.end(), ';', '|');
  std::istringstream is(normalized);
  while (std::getline(is, chunk, '|')) {
    if (chunk.find_first_not_of(" \t") == std::string::npos) continue;
    auto v = parse_list("potential.pieces", chunk);
    if (v.size() != 4) throw ConfigError("potential.pieces", "each piece needs 'lo hi alpha beta'");
    pieces.push_back({v[0], v[1], v[2], v[3]});
  }
  return pieces;
}

PotentialSpec read_table(int dim, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("potential.table", "cannot open " + path.string());
  std::vector<double> nodes, alpha, beta;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (std::isalpha(static_cast<unsigned char>(line[0]))) continue;  // header
    auto v = parse_list("potential.table", line);
    if (v.size() != 3) throw ConfigError("potential.table", "rows need coordinate,alpha,beta");
    nodes.push_back(v[0]);
    alpha.push_back(v[1]);
    beta.push_back(v[2]);
  }
  return PotentialSpec::tabulated(dim, std::move(nodes), std::move(alpha), std::move(beta));
}

OffsetMode parse_mode(const std::string& s) {
  const auto m = lower(s);
  if (m == "constant") return OffsetMode::constant;
  if (m == "log") return OffsetMode::log;
  if (m == "power") return OffsetMode::power;
  throw ConfigError("front.mode", "unknown offset mode '" + s + "'");
}

std::string mode_name(OffsetMode m) {
  switch (m) {
    case OffsetMode::constant:
      return "constant";
    case OffsetMode::log:
      return "log";
    case OffsetMode::power:
      return "power";
  }
  return "constant";
}

}  // namespace

Overrides environment_overrides(const std::string& prefix) {
  Overrides out;
  for (char** env = environ; env && *env; ++env) {
    std::string entry(*env);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(prefix.size(), eq - prefix.size());
    const auto us = name.find('_');
    if (us == std::string::npos) continue;
    out[lower(name.substr(0, us)) + "." + lower(name.substr(us + 1))] = entry.substr(eq + 1);
  }
  return out;
}

namespace {

ExperimentConfig from_tree(const pt::ptree& tree, const ExperimentConfig& defaults, bool fresh,
                           const std::filesystem::path& base_dir) {
  auto get = [&](const std::string& key) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'))) return *v;
    return std::nullopt;
  };
  auto num = [&](const std::string& key, double fallback) {
    auto v = get(key);
    return v ? parse_scalar(key, *v) : fallback;
  };
  auto list = [&](const std::string& key, std::vector<double> fallback) {
    auto v = get(key);
    return v ? parse_list(key, *v) : fallback;
  };

  static const std::set<std::string> known{
      "potential.dimension", "potential.kind",     "potential.pieces",  "potential.table",
      "experiment.x0",       "experiment.gamma",   "experiment.ball_radius", "experiment.checkpoints",
      "experiment.k_max",    "front.direction",    "front.mode",        "front.b",
      "front.coef",          "front.exponent",     "grid.half_width",   "grid.h",
      "grid.dt",             "grid.t0",            "grid.epsilon",      "grid.r_max",
      "grid.source_spacing", "mc.replicas",        "mc.seed",           "mc.max_particles",
      "mc.batches",          "mc.b_values"};
  std::vector<Violation> unknown;
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) unknown.push_back({section, "unknown key"});
    for (const auto& [key, _] : keys)
      if (!known.count(section + "." + key)) unknown.push_back({section + "." + key, "unknown key"});
  }
  if (!unknown.empty()) throw ConfigError(std::move(unknown));

  ExperimentConfig c = defaults;
  const bool potential_given = fresh || tree.get_child_optional("potential");
  const int dim = static_cast<int>(num("potential.dimension", defaults.potential.dimension()));
  if (potential_given) {
    const std::string kind = lower(get("potential.kind").value_or("piecewise"));
    if (kind == "piecewise") {
      c.potential = PotentialSpec::piecewise(dim, parse_pieces(get("potential.pieces").value_or("")));
    } else if (kind == "tabulated") {
      auto table = get("potential.table");
      if (!table) throw ConfigError("potential.table", "tabulated potential needs a table path");
      std::filesystem::path p(*table);
      if (p.is_relative()) p = base_dir / p;
      c.potential = read_table(dim, p);
    } else {
      throw ConfigError("potential.kind", "unknown potential kind '" + kind + "'");
    }
  }

  c.x0 = list("experiment.x0", fresh ? std::vector<double>(static_cast<std::size_t>(std::max(dim, 1)), 0.0) : c.x0);
  if (auto g = get("experiment.gamma")) {
    auto v = parse_list("experiment.gamma", *g);
    if (v.size() != 2) throw ConfigError("experiment.gamma", "expected 'lo,hi'");
    c.gamma_lo = v[0];
    c.gamma_hi = v[1];
  }
  c.ball_radius = num("experiment.ball_radius", c.ball_radius);
  c.checkpoints = list("experiment.checkpoints", c.checkpoints);
  c.k_max = static_cast<int>(num("experiment.k_max", c.k_max));

  std::vector<double> default_dir(static_cast<std::size_t>(std::max(dim, 1)), 0.0);
  default_dir[0] = 1.0;
  c.front.direction = list("front.direction", fresh ? default_dir : c.front.direction);
  if (auto m = get("front.mode")) c.front.mode = parse_mode(*m);
  c.front.b = num("front.b", c.front.b);
  c.front.coef = num("front.coef", c.front.coef);
  c.front.exponent = num("front.exponent", c.front.exponent);

  c.grid.half_width = num("grid.half_width", c.grid.half_width);
  c.grid.h = num("grid.h", c.grid.h);
  c.grid.dt = num("grid.dt", c.grid.dt);
  c.grid.t0 = num("grid.t0", c.grid.t0);
  c.grid.epsilon = num("grid.epsilon", c.grid.epsilon);
  c.grid.r_max = num("grid.r_max", c.grid.r_max);
  c.grid.source_spacing = num("grid.source_spacing", c.grid.source_spacing);

  c.mc.replicas = static_cast<std::int64_t>(num("mc.replicas", static_cast<double>(c.mc.replicas)));
  if (auto s = get("mc.seed")) {
    const auto [end, ec] = std::from_chars(s->data(), s->data() + s->size(), c.mc.seed);
    if (ec != std::errc{} || end != s->data() + s->size() || s->empty())
      throw ConfigError("mc.seed", "seed must be an unsigned 64-bit integer");
  }
  c.mc.max_particles = static_cast<std::int64_t>(num("mc.max_particles", static_cast<double>(c.mc.max_particles)));
  c.mc.batches = static_cast<int>(num("mc.batches", c.mc.batches));
  c.mc.b_values = list("mc.b_values", c.mc.b_values);
  return c;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const Overrides& overrides, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("file", e.what());
  }
  for (const auto& [key, value] : overrides) tree.put(pt::ptree::path_type(key, '.'), value);
  return from_tree(tree, ExperimentConfig{}, true, base_dir);
}

ExperimentConfig apply_overrides(const ExperimentConfig& config, const Overrides& overrides) {
  pt::ptree tree;
  for (const auto& [key, value] : overrides) tree.put(pt::ptree::path_type(key, '.'), value);
  return from_tree(tree, config, false, std::filesystem::current_path());
}

ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("file", "cannot open config " + path.string());
  return parse_config(in, overrides, path.parent_path());
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const PotentialSpec& p) {
  j = json::object();
  j["dimension"] = p.dimension();
  if (p.kind() == PotentialKind::piecewise) {
    j["kind"] = "piecewise";
    json pieces = json::array();
    for (const auto& q : p.pieces()) pieces.push_back({{"lo", q.lo}, {"hi", q.hi}, {"alpha", q.alpha}, {"beta", q.beta}});
    j["pieces"] = pieces;
  } else {
    j["kind"] = "tabulated";
    j["nodes"] = p.nodes();
    j["alpha"] = p.table_alpha();
    j["beta"] = p.table_beta();
  }
}

void from_json(const json& j, PotentialSpec& p) {
  const int dim = j.at("dimension").get<int>();
  if (j.at("kind").get<std::string>() == "piecewise") {
    std::vector<PotentialPiece> pieces;
    for (const auto& q : j.at("pieces"))
      pieces.push_back({q.at("lo").get<double>(), q.at("hi").get<double>(), q.at("alpha").get<double>(),
                        q.at("beta").get<double>()});
    p = PotentialSpec::piecewise(dim, std::move(pieces));
  } else {
    p = PotentialSpec::tabulated(dim, j.at("nodes").get<std::vector<double>>(),
                                 j.at("alpha").get<std::vector<double>>(), j.at("beta").get<std::vector<double>>());
  }
}

void to_json(json& j, const FrontSchedule& f) {
  j = {{"direction", f.direction}, {"mode", mode_name(f.mode)}, {"b", f.b}, {"coef", f.coef}, {"exponent", f.exponent}};
}

void from_json(const json& j, FrontSchedule& f) {
  f.direction = j.at("direction").get<std::vector<double>>();
  f.mode = parse_mode(j.at("mode").get<std::string>());
  f.b = j.at("b").get<double>();
  f.coef = j.at("coef").get<double>();
  f.exponent = j.at("exponent").get<double>();
}

void to_json(json& j, const GridSpec& g) {
  j = {{"half_width", g.half_width}, {"h", g.h},         {"dt", g.dt},
       {"t0", g.t0},                 {"epsilon", g.epsilon}, {"r_max", g.r_max},
       {"source_spacing", g.source_spacing}};
}

void from_json(const json& j, GridSpec& g) {
  g.half_width = j.at("half_width").get<double>();
  g.h = j.at("h").get<double>();
  g.dt = j.at("dt").get<double>();
  g.t0 = j.at("t0").get<double>();
  g.epsilon = j.at("epsilon").get<double>();
  g.r_max = j.at("r_max").get<double>();
  g.source_spacing = j.at("source_spacing").get<double>();
}

void to_json(json& j, const McSpec& m) {
  j = {{"replicas", m.replicas}, {"seed", m.seed},       {"max_particles", m.max_particles},
       {"batches", m.batches},   {"b_values", m.b_values}};
}

void from_json(const json& j, McSpec& m) {
  m.replicas = j.at("replicas").get<std::int64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.max_particles = j.at("max_particles").get<std::int64_t>();
  m.batches = j.at("batches").get<int>();
  m.b_values = j.at("b_values").get<std::vector<double>>();
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"potential", c.potential}, {"x0", c.x0},       {"gamma", {c.gamma_lo, c.gamma_hi}},
       {"ball_radius", c.ball_radius}, {"front", c.front}, {"checkpoints", c.checkpoints},
       {"grid", c.grid},           {"mc", c.mc},       {"k_max", c.k_max}};
}

void from_json(const json& j, ExperimentConfig& c) {
  c.potential = j.at("potential").get<PotentialSpec>();
  c.x0 = j.at("x0").get<std::vector<double>>();
  c.gamma_lo = j.at("gamma").at(0).get<double>();
  c.gamma_hi = j.at("gamma").at(1).get<double>();
  c.ball_radius = j.at("ball_radius").get<double>();
  c.front = j.at("front").get<FrontSchedule>();
  c.checkpoints = j.at("checkpoints").get<std::vector<double>>();
  c.grid = j.at("grid").get<GridSpec>();
  c.mc = j.at("mc").get<McSpec>();
  c.k_max = j.at("k_max").get<int>();
}

void to_json(json& j, const ValidatedConfig& v) {
  j = {{"config", v.config},
       {"derived",
        {{"sup_alpha", v.sup_alpha},
         {"sup_beta", v.sup_beta},
         {"total_rate", v.total_rate},
         {"support_radius", v.support_radius},
         {"lambda_upper", v.lambda_upper},
         {"horizon", v.horizon},
         {"front_bound", v.front_bound},
         {"buffer", v.buffer},
         {"smoothing_time", v.smoothing_time}}}};
}

void from_json(const json& j, ValidatedConfig& v) {
  v.config = j.at("config").get<ExperimentConfig>();
  const auto& d = j.at("derived");
  v.sup_alpha = d.at("sup_alpha").get<double>();
  v.sup_beta = d.at("sup_beta").get<double>();
  v.total_rate = d.at("total_rate").get<double>();
  v.support_radius = d.at("support_radius").get<double>();
  v.lambda_upper = d.at("lambda_upper").get<double>();
  v.horizon = d.at("horizon").get<double>();
  v.front_bound = d.at("front_bound").get<double>();
  v.buffer = d.at("buffer").get<double>();
  v.smoothing_time = d.at("smoothing_time").get<double>();
}

std::uint64_t content_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex_hash(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace bbmf
