// SPDX-License-Identifier: Apache-2.0
#include "bbmf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "bbmf/errors.hpp"
#include "bbmf/heatkernel.hpp"
#include "bbmf/moments.hpp"

namespace bbmf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;
constexpr const char* kSeedScheme =
    "Philox4x32-10; replica key = (replica mod 2^32, low word of splitmix64(seed) xor replica div 2^32); "
    "particle streams keyed by lineage id, proposal clock on a separate stream";

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<double> unit(std::vector<double> u) {
  double n = 0.0;
  for (double c : u) n += c * c;
  n = std::sqrt(n);
  for (double& c : u) c /= n;
  return u;
}

void require_one_dimensional(const ValidatedConfig& config, const std::string& stage) {
  if (config.dimension() != 1)
    throw ConfigError("potential.dimension", "the " + stage + " stage supports d = 1 only");
}

// Gamma defaults to the support D together with x0.
std::pair<double, double> effective_gamma(const ExperimentConfig& c) {
  if (c.gamma_lo != 0.0 || c.gamma_hi != 0.0) return {c.gamma_lo, c.gamma_hi};
  const double L = c.potential.support_radius();
  return {std::min(-L, c.x0.front()), std::max(L, c.x0.front())};
}

json estimate_json(const Estimate& e) { return json{{"mean", e.mean}, {"stderr", e.se}}; }

}  // namespace

void to_json(json& j, const Grid1D& g) { j = json{{"lo", g.lo}, {"h", g.h}, {"size", g.size}}; }

void from_json(const json& j, Grid1D& g) {
  j.at("lo").get_to(g.lo);
  j.at("h").get_to(g.h);
  j.at("size").get_to(g.size);
}

void to_json(json& j, const SpectralData& s) {
  j = json{{"dimension", s.dimension},
           {"radial", s.radial},
           {"grid", s.grid},
           {"lambda0", s.lambda0},
           {"psi", s.psi},
           {"tail",
            {{"constants", s.tail.constants},
             {"residual_slopes", s.tail.residual_slopes},
             {"decay_rates", s.tail.decay_rates},
             {"window_lo", s.tail.window_lo},
             {"window_hi", s.tail.window_hi}}},
           {"gamma", s.gamma},
           {"ball_radius", s.ball_radius},
           {"residual", s.residual},
           {"norm", s.norm},
           {"iterations", s.iterations}};
}

void from_json(const json& j, SpectralData& s) {
  j.at("dimension").get_to(s.dimension);
  j.at("radial").get_to(s.radial);
  j.at("grid").get_to(s.grid);
  j.at("lambda0").get_to(s.lambda0);
  j.at("psi").get_to(s.psi);
  const auto& t = j.at("tail");
  t.at("constants").get_to(s.tail.constants);
  t.at("residual_slopes").get_to(s.tail.residual_slopes);
  t.at("decay_rates").get_to(s.tail.decay_rates);
  t.at("window_lo").get_to(s.tail.window_lo);
  t.at("window_hi").get_to(s.tail.window_hi);
  j.at("gamma").get_to(s.gamma);
  j.at("ball_radius").get_to(s.ball_radius);
  j.at("residual").get_to(s.residual);
  j.at("norm").get_to(s.norm);
  j.at("iterations").get_to(s.iterations);
}

void to_json(json& j, const Estimate& e) { j = estimate_json(e); }

void from_json(const json& j, Estimate& e) {
  j.at("mean").get_to(e.mean);
  j.at("stderr").get_to(e.se);
}

void to_json(json& j, const EstimatorSummary& s) {
  json cps = json::array();
  for (const auto& c : s.checkpoints) {
    json balls = json::array();
    for (const auto& b : c.balls)
      balls.push_back({{"center", b.center}, {"m1", b.m1}, {"count", b.count}, {"eta", b.eta}});
    cps.push_back({{"t", c.t},
                   {"replicas", c.replicas},
                   {"survivors", c.survivors},
                   {"survival_fraction", c.survival_fraction},
                   {"population", c.population},
                   {"martingale", c.martingale},
                   {"unreliable", c.unreliable},
                   {"balls", balls}});
  }
  j = json{{"replicas", s.replicas}, {"excluded", s.excluded}, {"batches", s.batches},
           {"k_max", s.k_max},       {"warnings", s.warnings}, {"checkpoints", cps}};
}

std::vector<std::vector<Ball>> observation_balls(const ValidatedConfig& config, double lambda0) {
  const auto& c = config.config;
  std::vector<std::vector<Ball>> out;
  for (double t : c.checkpoints) {
    std::vector<Ball> row;
    Ball s;
    s.b = c.front.offset(t);
    s.distance = front_distance(c.front, lambda0, t);
    s.center = front_center(c.front, lambda0, t);
    row.push_back(s);
    for (double b : c.mc.b_values) {
      FrontSchedule f = c.front;
      f.mode = OffsetMode::constant;
      f.b = b;
      Ball e;
      e.b = b;
      e.distance = front_distance(f, lambda0, t);
      e.center = front_center(f, lambda0, t);
      e.scheduled = false;
      row.push_back(e);
    }
    out.push_back(std::move(row));
  }
  return out;
}

SimulationSetup make_simulation(const ValidatedConfig& config, const SpectralData& spectral) {
  const auto& c = config.config;
  SimulationSetup s;
  s.potential = c.potential;
  s.x0 = c.x0;
  s.seed = c.mc.seed;
  s.max_particles = c.mc.max_particles;
  auto& ob = s.observe;
  ob.checkpoints = c.checkpoints;
  ob.ball_radius = c.ball_radius;
  ob.lambda0 = spectral.lambda0;
  ob.psi_grid = spectral.psi;
  ob.psi_lo = spectral.grid.lo;
  ob.psi_h = spectral.grid.h;
  ob.psi_radial = spectral.radial;
  ob.decay_rate = spectral.decay_rate();
  const auto& tails = spectral.tail.constants;
  ob.psi_tail_minus = tails.empty() ? 0.0 : tails.front();
  ob.psi_tail_plus = tails.empty() ? 0.0 : tails.back();
  ob.direction = unit(c.front.direction);
  const int d = config.dimension();
  for (const auto& row : observation_balls(config, spectral.lambda0)) {
    std::vector<double> flat;
    for (const auto& b : row) flat.insert(flat.end(), b.center.begin(), b.center.end());
    ob.centers.push_back(std::move(flat));
  }
  for (double t : c.checkpoints) {
    const double a = front_position(spectral.lambda0, d, t);
    ob.front.push_back(a);
    std::vector<double> probes;
    for (int i = 0; i <= 18; ++i) {
      const double r = a - 6.0 + 0.5 * i;
      for (int k = 0; k < d; ++k) probes.push_back(r * ob.direction[k]);
    }
    ob.probes.push_back(std::move(probes));
  }
  return s;
}

Pipeline::Pipeline(ValidatedConfig config, PipelineOptions options)
    : config_(std::move(config)), options_(std::move(options)) {}

Pipeline::~Pipeline() = default;

void Pipeline::note(const std::string& line) const {
  if (options_.log) options_.log(line);
}

json Pipeline::key_material(const std::string& stage) {
  const auto& c = config_.config;
  json m{{"stage", stage}, {"format", kFormatVersion}};
  if (stage == "eigen") {
    m["potential"] = c.potential;
    m["grid"] = c.grid;
    m["ball_radius"] = c.ball_radius;
  } else if (stage == "kernel") {
    m["eigen"] = stage_key("eigen");
    m["x0"] = c.x0;
    m["checkpoints"] = c.checkpoints;
    m["front"] = c.front;
    m["b_values"] = c.mc.b_values;
    m["k_max"] = c.k_max;
  } else if (stage == "moments") {
    m["eigen"] = stage_key("eigen");
    m["x0"] = c.x0;
    m["gamma"] = {c.gamma_lo, c.gamma_hi};
    m["front"] = c.front;
    m["b_values"] = c.mc.b_values;
    m["k_max"] = c.k_max;
  } else if (stage == "simulate") {
    m["eigen"] = stage_key("eigen");
    m["kernel"] = stage_key("kernel");
    m["x0"] = c.x0;
    m["checkpoints"] = c.checkpoints;
    m["front"] = c.front;
    m["mc"] = c.mc;
    m["k_max"] = c.k_max;
    m["reduction"] = options_.deterministic_reduce ? "fixed_order" : "unordered";
    m["raw_row_limit"] = options_.raw_row_limit;
  } else {
    throw std::invalid_argument("unknown stage " + stage);
  }
  return m;
}

std::string Pipeline::stage_key(const std::string& stage) { return hex_hash(content_hash(key_material(stage))); }

const json& Pipeline::run_stage(const std::string& name, const Producer& produce) {
  auto& st = stages_[name];
  if (st.ready) return st.payload;
  st.key = stage_key(name);
  st.dir = options_.out / "cache" / (name + "-" + st.key);
  const fs::path payload_path = st.dir / "payload.json";
  if (options_.use_cache && fs::exists(payload_path)) {
    try {
      st.payload = json::parse(read_text(payload_path));
      st.ready = true;
      records_.push_back({name, st.key, true});
      note(name + ": cache hit (" + st.key + ")");
      return st.payload;
    } catch (const json::exception&) {
      note(name + ": unreadable cache entry, recomputing");
    }
  }
  fs::remove_all(st.dir);
  fs::create_directories(st.dir);
  try {
    st.payload = produce(st.dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const NumericalError&) {
    throw;
  } catch (const std::exception& e) {
    throw NumericalError(name, e.what());
  }
  const fs::path tmp = st.dir / "payload.json.tmp";
  write_text(tmp, st.payload.dump() + "\n");
  fs::rename(tmp, payload_path);
  st.ready = true;
  records_.push_back({name, st.key, false});
  note(name + ": computed (" + st.key + ")");
  return st.payload;
}

const json& Pipeline::eigen() {
  return run_stage("eigen", [this](const fs::path& dir) { return produce_eigen(dir); });
}
const json& Pipeline::kernel() {
  return run_stage("kernel", [this](const fs::path& dir) { return produce_kernel(dir); });
}
const json& Pipeline::moments() {
  return run_stage("moments", [this](const fs::path& dir) { return produce_moments(dir); });
}
const json& Pipeline::simulate() {
  return run_stage("simulate", [this](const fs::path& dir) { return produce_simulate(dir); });
}

const SpectralData& Pipeline::spectral() {
  if (!spectral_) spectral_ = std::make_unique<SpectralData>(eigen().at("spectral").get<SpectralData>());
  return *spectral_;
}

json Pipeline::produce_eigen(const fs::path& dir) {
  const auto& c = config_.config;
  SpectralOptions opts;
  opts.ball_radius = c.ball_radius;
  const SpectralData sp = principal_eigenpair(c.potential, c.grid, opts);
  const auto direction = unit(c.front.direction);
  json summary{{"lambda0", sp.lambda0},
               {"gamma", sp.gamma},
               {"C_u", sp.tail_constant_for(direction)},
               {"tail_constants", sp.tail.constants},
               {"fitted_decay_rates", sp.tail.decay_rates},
               {"decay_rate", sp.decay_rate()},
               {"front_speed", std::sqrt(sp.lambda0 / 2.0)},
               {"residual", sp.residual},
               {"iterations", sp.iterations},
               {"grid", sp.grid},
               {"dimension", sp.dimension},
               {"radial", sp.radial}};
  if (sp.dimension == 1) summary["gamma_closed_form"] = gamma_closed_form_1d(sp.lambda0, c.ball_radius);
  write_text(dir / "eigen.json", summary.dump(2) + "\n");
  std::ostringstream csv;
  csv << (sp.radial ? "r" : "x") << ",psi\n";
  for (std::size_t i = 0; i < sp.psi.size(); ++i) csv << number(sp.grid.x(i)) << ',' << number(sp.psi[i]) << '\n';
  write_text(dir / "psi.csv", csv.str());
  return json{{"spectral", sp}, {"summary", summary}};
}

json Pipeline::produce_kernel(const fs::path& dir) {
  require_one_dimensional(config_, "kernel");
  const auto& c = config_.config;
  const SpectralData& sp = spectral();
  const double x0 = c.x0.front();
  const bool branching = c.potential.sup_alpha() > 0.0;

  DensityOptions opts;
  opts.checkpoints = c.checkpoints;
  opts.shift = sp.lambda0;
  if (branching && c.k_max >= 2) {
    opts.dense_trace = true;
    opts.trace_lo = c.potential.alpha_lo() - 2.0 * c.grid.h;
    opts.trace_hi = c.potential.alpha_hi() + 2.0 * c.grid.h;
  }
  const HeatKernelTable table = solve_density(c.potential, c.grid, x0, opts);
  DensityOptions mirror_opts = opts;
  mirror_opts.dense_trace = false;
  const HeatKernelTable mirror = solve_density(c.potential, c.grid, x0 + 1.0, mirror_opts);

  json balls = json::array();
  const auto rows = observation_balls(config_, sp.lambda0);
  for (std::size_t ci = 0; ci < c.checkpoints.size(); ++ci) {
    const double t = c.checkpoints[ci];
    json row = json::array();
    for (const auto& ball : rows[ci]) {
      const double y = ball.center.front();
      const FirstMoment fm = first_moment(sp, table, y, t, c.ball_radius);
      if (!(fm.value > 0.0)) {
        std::ostringstream os;
        os << "first moment not positive at t = " << t << ", y = " << y;
        throw NumericalError("kernel", os.str());
      }
      std::vector<double> m(static_cast<std::size_t>(c.k_max), 0.0), forward;
      m[0] = fm.value;
      if (opts.dense_trace) {
        const auto ft = finite_time_mk(table, sp, c.potential, c.grid, y, t, c.k_max, c.ball_radius);
        m = ft.m;
        forward = ft.forward;
      }
      row.push_back({{"b", ball.b},
                     {"center", y},
                     {"scheduled", ball.scheduled},
                     {"m1", fm.value},
                     {"m1_mid", fm.mid},
                     {"m1_asymptotic", fm.far},
                     {"m", m},
                     {"forward", forward},
                     {"eta", normalized_moments(m)}});
    }
    balls.push_back(std::move(row));
  }

  json manifest{{"grid", table.grid},
                {"source", x0},
                {"dt", table.dt},
                {"smoothing_time", table.smoothing_time},
                {"horizon", table.horizon()},
                {"checkpoints", table.times},
                {"mass", table.mass},
                {"boundary_ratio", table.boundary_ratio},
                {"min_value", table.min_value()},
                {"symmetry_error", symmetry_error(table, mirror)},
                {"symmetry_source", x0 + 1.0}};
  write_text(dir / "kernel.json", manifest.dump(2) + "\n");
  std::ostringstream csv;
  csv << "r,z,rho1\n";
  for (std::size_t ci = 0; ci < table.times.size(); ++ci)
    for (std::size_t i = 0; i < table.grid.size; ++i)
      csv << number(table.times[ci]) << ',' << number(table.grid.x(i)) << ',' << number(table.values[ci][i]) << '\n';
  write_text(dir / "kernel.csv", csv.str());
  return json{{"manifest", manifest}, {"balls", balls}};
}

json Pipeline::produce_moments(const fs::path& dir) {
  require_one_dimensional(config_, "moments");
  const auto& c = config_.config;
  const SpectralData& sp = spectral();
  const double x0 = c.x0.front();
  const auto direction = unit(c.front.direction);
  const MomentTable table = compute_Gk(sp, c.potential, c.grid, c.k_max, x0);

  std::vector<double> offsets;
  if (c.front.mode == OffsetMode::constant) offsets.push_back(c.front.b);
  for (double b : c.mc.b_values)
    if (std::find(offsets.begin(), offsets.end(), b) == offsets.end()) offsets.push_back(b);
  json front = json::array();
  for (double b : offsets)
    front.push_back({{"b", b},
                     {"scale", front_scale(sp, direction, b)},
                     {"f", limit_moments_front(table, sp, b, direction, x0)}});

  json tails = json::array();
  for (int k = 2; k <= c.k_max; ++k) {
    const auto& t = table.tails[static_cast<std::size_t>(k - 1)];
    tails.push_back({{"k", k}, {"truncated", t.truncated}, {"tail", t.tail}, {"overlap", t.overlap}});
  }

  json payload{{"lambda0", sp.lambda0},
               {"gamma", sp.gamma},
               {"C_u", sp.tail_constant_for(direction)},
               {"k_max", c.k_max},
               {"x0", x0},
               {"r_max", table.r_max},
               {"dt", table.dt},
               {"f_interior", limit_moments_interior(table, x0)},
               {"f_front", front},
               {"tails", tails}};

  const auto [gamma_lo, gamma_hi] = effective_gamma(c);
  payload["Gamma"] = {gamma_lo, gamma_hi};
  if (c.k_max >= 2) {
    const auto integrals = semigroup_integrals(sp, c.potential, c.grid, c.k_max, gamma_lo, gamma_hi);
    const auto carleman = carleman_diagnostics(table, integrals, gamma_lo, gamma_hi);
    payload["semigroup"] = {{"a", integrals.a}, {"tn_norm", integrals.tn_norm}};
    payload["carleman"] = {{"a", carleman.a},
                           {"A", carleman.A},
                           {"operator_A", carleman.operator_A},
                           {"sup_f", carleman.sup_f},
                           {"bound", carleman.bound},
                           {"ratio", carleman.ratio},
                           {"partial_sums", carleman.partial_sums},
                           {"f2_within_operator_bound", carleman.f2_within_operator_bound},
                           {"violated", carleman.violated}};
  }
  std::vector<double> f_min;
  for (int k = 1; k <= c.k_max; ++k) {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < table.grid.size; ++i) {
      const double x = table.grid.x(i);
      if (x < gamma_lo - 1e-12 || x > gamma_hi + 1e-12) continue;
      lo = std::min(lo, table.f(k, x));
    }
    f_min.push_back(std::isfinite(lo) ? lo : table.f(k, x0));
  }
  payload["f_min_gamma"] = f_min;

  json summary = payload;
  write_text(dir / "moments.json", summary.dump(2) + "\n");
  std::ostringstream csv;
  csv << "x";
  for (int k = 1; k <= c.k_max; ++k) csv << ",G" << k;
  csv << '\n';
  for (std::size_t i = 0; i < table.grid.size; ++i) {
    csv << number(table.grid.x(i));
    for (int k = 1; k <= c.k_max; ++k) csv << ',' << number(table.G[static_cast<std::size_t>(k - 1)][i]);
    csv << '\n';
  }
  write_text(dir / "Gk.csv", csv.str());
  return payload;
}

json Pipeline::produce_simulate(const fs::path& dir) {
  require_one_dimensional(config_, "simulate");
  const auto& c = config_.config;
  const SpectralData& sp = spectral();
  const json& kern = kernel();
  std::vector<std::vector<double>> m1;
  for (const auto& row : kern.at("balls")) {
    std::vector<double> r;
    for (const auto& b : row) r.push_back(b.at("m1").get<double>());
    m1.push_back(std::move(r));
  }

  const SimulationSetup setup = make_simulation(config_, sp);
  note("simulate: " + std::to_string(c.mc.replicas) + " replicas");
  const auto replicas = run_ensemble(setup, 0, static_cast<std::uint64_t>(c.mc.replicas));
  const auto reduction = options_.deterministic_reduce ? Reduction::fixed_order : Reduction::unordered;
  EstimatorSummary summary = estimate_moments(replicas, m1, c.k_max, c.mc.batches, Execution::parallel, reduction);
  const auto balls = observation_balls(config_, sp.lambda0);
  for (std::size_t ci = 0; ci < summary.checkpoints.size(); ++ci)
    for (std::size_t b = 0; b < summary.checkpoints[ci].balls.size(); ++b)
      summary.checkpoints[ci].balls[b].center = balls[ci][b].center;

  const double psi0 = sp.psi_at(c.x0);
  const auto mart = martingale_check(replicas, psi0, c.mc.batches);
  json mrows = json::array();
  for (const auto& r : mart.rows)
    mrows.push_back({{"t", r.t}, {"value", r.value}, {"z", r.z}, {"ok", r.ok}});
  json frows = json::array();
  for (const auto& r : front_statistics(replicas))
    frows.push_back({{"t", r.t},
                     {"survivors", r.survivors},
                     {"survival_fraction", r.survival_fraction},
                     {"median_speed", r.median_speed},
                     {"q10", r.q10},
                     {"q90", r.q90},
                     {"mean_beyond", r.mean_beyond}});
  std::vector<double> probe_offsets;
  for (int i = 0; i <= 18; ++i) probe_offsets.push_back(-6.0 + 0.5 * i);

  std::int64_t branches = 0, deaths = 0, proposals = 0;
  for (const auto& r : replicas) {
    branches += r.branches;
    deaths += r.deaths;
    proposals += r.proposals;
  }

  const std::size_t rows = replicas.size() * c.checkpoints.size();
  const bool raw = rows <= options_.raw_row_limit;
  if (raw) {
    std::ostringstream csv;
    csv << "replica,excluded,t,population,max_norm,martingale,beyond_front";
    const std::size_t nb = balls.empty() ? 0 : balls.front().size();
    for (std::size_t b = 0; b < nb; ++b) csv << ",count" << b;
    csv << '\n';
    for (const auto& r : replicas)
      for (const auto& o : r.obs) {
        csv << r.replica << ',' << (r.excluded ? 1 : 0) << ',' << number(o.t) << ',' << o.population << ','
            << number(o.max_norm) << ',' << number(o.martingale) << ',' << o.beyond_front;
        for (auto n : o.counts) csv << ',' << n;
        csv << '\n';
      }
    write_text(dir / "replicas.csv", csv.str());
  }

  json payload{{"seed", c.mc.seed},
               {"seed_scheme", kSeedScheme},
               {"reduction", options_.deterministic_reduce ? "fixed_order" : "unordered"},
               {"replicas", replicas.size()},
               {"excluded", summary.excluded},
               {"summary", summary},
               {"martingale", {{"target", mart.target}, {"flagged", mart.flagged}, {"rows", mrows}}},
               {"front", frows},
               {"presence", {{"offsets", probe_offsets}, {"fractions", presence_profile(replicas)}}},
               {"events", {{"branches", branches}, {"deaths", deaths}, {"proposals", proposals}}},
               {"raw_csv", raw}};
  write_text(dir / "simulate.json", payload.dump(2) + "\n");
  return payload;
}

ComparisonReport Pipeline::compare() {
  const auto& c = config_.config;
  const json& kern = kernel();
  const json& mom = moments();
  const json& sim = simulate();

  ComparisonReport report;
  report.policy = options_.policy;
  const auto f_interior = mom.at("f_interior").get<std::vector<double>>();
  auto f_front = [&](double b) {
    for (const auto& e : mom.at("f_front"))
      if (e.at("b").get<double>() == b) return e.at("f").get<std::vector<double>>();
    throw NumericalError("compare", "no front moments for b = " + number(b));
  };

  const auto& cps = sim.at("summary").at("checkpoints");
  const std::size_t nballs = kern.at("balls").empty() ? 0 : kern.at("balls").at(0).size();
  for (std::size_t b = 0; b < nballs; ++b) {
    std::map<CellKey, double> theory;
    std::map<CellKey, Estimate> empirical;
    std::map<CellKey, ReportRow> rows;
    for (std::size_t ci = 0; ci < c.checkpoints.size(); ++ci) {
      const json& kb = kern.at("balls").at(ci).at(b);
      const json& sb = cps.at(ci).at("balls").at(b);
      const bool scheduled = kb.at("scheduled").get<bool>();
      const bool bounded = !scheduled || c.front.mode == OffsetMode::constant;
      const auto th = bounded ? f_front(scheduled ? c.front.b : kb.at("b").get<double>()) : f_interior;
      const auto eta_pred = kb.at("eta").get<std::vector<double>>();
      for (int k = 1; k <= c.k_max; ++k) {
        const CellKey key{c.checkpoints[ci], k};
        theory[key] = th.at(static_cast<std::size_t>(k - 1));
        empirical[key] = sb.at("eta").at(static_cast<std::size_t>(k - 1)).get<Estimate>();
        ReportRow r;
        r.t = key.t;
        r.k = k;
        r.b = kb.at("b").get<double>();
        r.center = kb.at("center").get<double>();
        r.branch = bounded ? "front" : "interior";
        r.m1 = kb.at("m1").get<double>();
        r.m1_asymptotic = kb.at("m1_asymptotic").get<double>();
        r.finite_time = eta_pred.at(static_cast<std::size_t>(k - 1));
        rows[key] = r;
      }
    }
    for (const auto& v : bbmf::compare(theory, empirical, options_.policy)) {
      ReportRow r = rows.at({v.t, v.k});
      r.theory = v.theory;
      r.empirical = v.empirical;
      r.se = v.se;
      r.z = v.z;
      r.pass = v.pass;
      (b == 0 ? report.rows : report.sweep).push_back(r);
    }
  }

  json population = json::array(), consistency = json::array();
  const auto mass = kern.at("manifest").at("mass").get<std::vector<double>>();
  for (std::size_t ci = 0; ci < cps.size(); ++ci) {
    const auto pop = cps.at(ci).at("population").get<Estimate>();
    population.push_back({{"t", c.checkpoints[ci]},
                          {"empirical", pop},
                          {"pde", mass.at(ci)},
                          {"z", pop.se > 0.0 ? (pop.mean - mass[ci]) / pop.se : 0.0}});
    for (std::size_t b = 0; b < nballs; ++b) {
      const auto cnt = cps.at(ci).at("balls").at(b).at("count").get<Estimate>();
      const double m1 = kern.at("balls").at(ci).at(b).at("m1").get<double>();
      consistency.push_back({{"t", c.checkpoints[ci]},
                             {"b", kern.at("balls").at(ci).at(b).at("b")},
                             {"count", cnt},
                             {"m1", m1},
                             {"z", cnt.se > 0.0 ? (cnt.mean - m1) / cnt.se : 0.0}});
    }
  }
  report.diagnostics = {{"martingale", sim.at("martingale")},
                        {"front", sim.at("front")},
                        {"population", population},
                        {"first_moment", consistency},
                        {"warnings", sim.at("summary").at("warnings")},
                        {"excluded", sim.at("excluded")},
                        {"replicas", sim.at("replicas")},
                        {"spectral", eigen().at("summary")},
                        {"kernel", {{"symmetry_error", kern.at("manifest").at("symmetry_error")},
                                    {"min_value", kern.at("manifest").at("min_value")}}}};
  if (mom.contains("carleman")) report.diagnostics["carleman"] = mom.at("carleman");

  json stage_keys = json::object();
  for (const char* s : {"eigen", "kernel", "moments", "simulate"}) stage_keys[s] = stage_key(s);
  report.provenance = {{"library", kLibraryVersion},
                       {"format", kFormatVersion},
                       {"config", config_},
                       {"config_hash", hex_hash(content_hash(json(config_.config)))},
                       {"seed", c.mc.seed},
                       {"seed_scheme", kSeedScheme},
                       {"reduction", options_.deterministic_reduce ? "fixed_order" : "unordered"},
                       {"grid", c.grid},
                       {"stages", stage_keys}};
  return report;
}

std::vector<fs::path> Pipeline::export_artifacts(const std::vector<std::string>& stages) {
  std::vector<fs::path> out;
  fs::create_directories(options_.out);
  for (const auto& name : stages) {
    auto it = stages_.find(name);
    if (it == stages_.end() || !it->second.ready) continue;
    for (const auto& entry : fs::directory_iterator(it->second.dir)) {
      const auto file = entry.path().filename();
      if (file == "payload.json") continue;
      fs::copy_file(entry.path(), options_.out / file, fs::copy_options::overwrite_existing);
      out.push_back(options_.out / file);
    }
  }
  return out;
}

ExperimentConfig load_any_config(const fs::path& path, const Overrides& overrides) {
  if (path.extension() != ".json") return load_config(path, overrides);
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const std::exception& e) {
    throw ConfigError("file", std::string("cannot parse JSON config: ") + e.what());
  }
  if (j.contains("provenance")) j = j.at("provenance").at("config");
  if (j.contains("config") && j.contains("derived")) j = j.at("config");
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("file", std::string("malformed JSON config: ") + e.what());
  }
  return overrides.empty() ? c : apply_overrides(c, overrides);
}

ComparisonReport run_pipeline(const fs::path& config_path, PipelineOptions options, const Overrides& overrides) {
  const ValidatedConfig config = validate(load_any_config(config_path, overrides));
  Pipeline pipeline(config, std::move(options));
  ComparisonReport report = pipeline.compare();
  emit(report, pipeline.options().out);
  return report;
}

}  // namespace bbmf
