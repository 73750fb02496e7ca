// SPDX-License-Identifier: Apache-2.0
//
// bbmfront: command-line driver for the eigen / kernel / moments / simulate /
// compare stages. Exit codes: 0 pass, 1 comparison failures, 2 configuration
// errors, 3 numerical-stage failures.
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bbmf/errors.hpp"
#include "bbmf/parallel.hpp"
#include "bbmf/pipeline.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kCompareFailed = 1;
constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

void print_rows(const std::vector<bbmf::ReportRow>& rows) {
  std::cout << std::setprecision(6);
  for (const auto& r : rows)
    std::cout << "t=" << r.t << " b=" << r.b << " k=" << r.k << "  theory " << r.theory << "  finite-t "
              << r.finite_time << "  empirical " << r.empirical << " +- " << r.se << "  z " << r.z << "  "
              << (r.pass ? "PASS" : "FAIL") << '\n';
}

void write_front_tables(const nlohmann::json& sim, const std::filesystem::path& out, double speed) {
  std::ofstream front(out / "front.csv");
  front << "t,survivors,survival_fraction,median_speed,q10,q90,mean_beyond,target_speed\n" << std::setprecision(17);
  for (const auto& r : sim.at("front"))
    front << r.at("t").get<double>() << ',' << r.at("survivors").get<std::size_t>() << ','
          << r.at("survival_fraction").get<double>() << ',' << r.at("median_speed").get<double>() << ','
          << r.at("q10").get<double>() << ',' << r.at("q90").get<double>() << ','
          << r.at("mean_beyond").get<double>() << ',' << speed << '\n';
  std::ofstream presence(out / "presence.csv");
  presence << "t,offset,fraction\n" << std::setprecision(17);
  const auto offsets = sim.at("presence").at("offsets").get<std::vector<double>>();
  const auto& fractions = sim.at("presence").at("fractions");
  const auto& rows = sim.at("front");
  for (std::size_t c = 0; c < fractions.size(); ++c)
    for (std::size_t i = 0; i < offsets.size(); ++i)
      presence << rows.at(c).at("t").get<double>() << ',' << offsets[i] << ','
               << fractions.at(c).at(i).get<double>() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branching Brownian motion with compactly supported branching: front moments toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  bool deterministic = false;
  bool no_cache = false;
  bool quiet = false;
  std::string out = "bbmf-out";
  bbmf::TolerancePolicy policy;

  app.add_option("--config", config_path, "INI config, JSON config, or a report.json to re-run")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base seed (overrides mc.seed)");
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)");
  app.add_flag("--deterministic-reduce", deterministic, "fixed-order reductions (bit-identical aggregates)");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_flag("--no-cache", no_cache, "recompute every stage");
  app.add_flag("--quiet", quiet, "no stage log on stderr");
  app.add_option("--rel-tol", policy.rel_tol, "relative tolerance for compare")->capture_default_str();
  app.add_option("--z-tol", policy.z_tol, "standard-error tolerance for compare")->capture_default_str();
  app.footer("Any config key can be set from the environment as BBMF_<SECTION>_<KEY>, e.g. BBMF_MC_REPLICAS=500.");

  auto* eigen = app.add_subcommand("eigen", "principal eigenpair: eigen.json, psi.csv");
  auto* kernel = app.add_subcommand("kernel", "density slices: kernel.csv, kernel.json");
  auto* moments = app.add_subcommand("moments", "limit moments: moments.json, Gk.csv");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo ensemble: simulate.json, replicas.csv");
  auto* compare = app.add_subcommand("compare", "theory vs simulation report");
  auto* frontprofile = app.add_subcommand("frontprofile", "full pipeline with every artifact");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    auto overrides = bbmf::environment_overrides("BBMF_");
    if (seed) overrides["mc.seed"] = std::to_string(*seed);
    const auto config = bbmf::validate(bbmf::load_any_config(config_path, overrides));
    bbmf::set_threads(threads);

    bbmf::PipelineOptions options;
    options.out = out;
    options.use_cache = !no_cache;
    options.deterministic_reduce = deterministic;
    options.policy = policy;
    if (!quiet) options.log = [](const std::string& line) { std::cerr << "[bbmfront] " << line << '\n'; };
    bbmf::Pipeline pipeline(config, options);

    if (eigen->parsed()) {
      const auto& s = pipeline.eigen().at("summary");
      pipeline.export_artifacts({"eigen"});
      std::cout << std::setprecision(10) << "lambda0 " << s.at("lambda0").get<double>() << "  gamma "
                << s.at("gamma").get<double>() << "  C(u) " << s.at("C_u").get<double>() << '\n';
      return kPass;
    }
    if (kernel->parsed()) {
      const auto& m = pipeline.kernel().at("manifest");
      pipeline.export_artifacts({"kernel"});
      std::cout << std::setprecision(10) << "horizon " << m.at("horizon").get<double>() << "  symmetry error "
                << m.at("symmetry_error").get<double>() << '\n';
      return kPass;
    }
    if (moments->parsed()) {
      const auto& m = pipeline.moments();
      pipeline.export_artifacts({"moments"});
      std::cout << std::setprecision(8) << "f^k(x0):";
      for (double f : m.at("f_interior")) std::cout << ' ' << f;
      std::cout << '\n';
      for (const auto& e : m.at("f_front")) {
        std::cout << "f^k_{b,u}(x0), b = " << e.at("b").get<double>() << ':';
        for (double f : e.at("f")) std::cout << ' ' << f;
        std::cout << '\n';
      }
      return kPass;
    }
    if (simulate->parsed()) {
      const auto& s = pipeline.simulate();
      pipeline.export_artifacts({"simulate"});
      std::cout << "replicas " << s.at("replicas").get<std::size_t>() << "  excluded "
                << s.at("excluded").get<std::size_t>() << '\n';
      for (const auto& w : s.at("summary").at("warnings")) std::cerr << "warning: " << w.get<std::string>() << '\n';
      return kPass;
    }

    const auto report = pipeline.compare();
    if (frontprofile->parsed()) {
      pipeline.export_artifacts({"eigen", "kernel", "moments", "simulate"});
      write_front_tables(pipeline.simulate(), out, std::sqrt(pipeline.spectral().lambda0 / 2.0));
    }
    bbmf::emit(report, out);
    print_rows(report.rows);
    print_rows(report.sweep);
    (void)compare;
    return report.all_pass() ? kPass : kCompareFailed;
  } catch (const bbmf::ConfigError& e) {
    std::cerr << "configuration error:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v.field << ": " << v.message << '\n';
    return kConfigError;
  } catch (const bbmf::NumericalError& e) {
    std::cerr << "numerical failure in stage " << e.stage() << ": " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kNumericalError;
  }
}
