// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run on the square-well reference (alpha = 1 on [-1, 1], beta = 0,
// x0 = 0, unit ball, direction +1). Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bbmf/heatkernel.hpp"
#include "bbmf/mcsim.hpp"
#include "bbmf/moments.hpp"
#include "bbmf/pipeline.hpp"
#include "bbmf/spectral.hpp"

using namespace bbmf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Runner {
  int failures = 0;

  void run(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    finish(id, name, budget_s, secs, o);
  }

  void finish(int id, const std::string& name, double budget_s, double secs, const Outcome& o) {
    const bool in_time = secs <= budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] %2d %-28s %s | %.1f s (budget %.0f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                o.detail.c_str(), secs, budget_s);
    std::fflush(stdout);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run on the square-well reference"};
  std::int64_t replicas = 400000;
  std::int64_t speed_replicas = 2000;
  std::uint64_t seed = 20240601;
  std::string workdir = "acceptance-out";
  int threads = 0;
  app.add_option("--replicas", replicas, "ensemble size for the moment checks")->capture_default_str();
  app.add_option("--speed-replicas", speed_replicas, "ensemble size for the front-speed check")->capture_default_str();
  app.add_option("--seed", seed, "base seed")->capture_default_str();
  app.add_option("--workdir", workdir, "scratch directory for pipeline outputs")->capture_default_str();
  app.add_option("--threads", threads, "OpenMP threads");
  CLI11_PARSE(app, argc, argv);
  set_threads(threads);

  Runner runner;
  const ExperimentConfig ref = square_well_config();
  const GridSpec grid;
  const double oracle = square_well_oracle(1.0, 1.0);
  const std::vector<double> plus{1.0};

  SpectralData sp;
  runner.run(1, "eigenvalue oracle", 5.0, [&] {
    sp = principal_eigenpair(ref.potential, grid);
    GridSpec coarse = grid;
    coarse.h = 2.0 * grid.h;
    const double lc = principal_eigenpair(ref.potential, coarse).lambda0;
    const double rich = (4.0 * sp.lambda0 - lc) / 3.0;
    const double e1 = std::abs(sp.lambda0 - oracle), e2 = std::abs(rich - oracle);
    return Outcome{e1 <= 1e-4 && e2 <= 1e-6,
                   fmt("lambda0 %.9f oracle %.9f |err| %.2e (tol 1e-4), Richardson |err| %.2e (tol 1e-6)", sp.lambda0,
                       oracle, e1, e2)};
  });

  runner.run(2, "ground-state tail", 5.0, [&] {
    const TailFit fit = tail_constant(sp, 4.0, 7.0);
    const double kappa = sp.decay_rate();
    double worst = 0.0;
    for (double r : fit.decay_rates) worst = std::max(worst, std::abs(r + kappa) / kappa);
    const double asym = std::abs(fit.constants[1] - fit.constants[0]);
    return Outcome{worst <= 0.01 && asym <= 1e-8,
                   fmt("decay %.6f / %.6f vs -%.6f (rel %.2e, tol 1e-2), |C(+1)-C(-1)| %.2e (tol 1e-8)",
                       fit.decay_rates[0], fit.decay_rates[1], kappa, worst, asym)};
  });

  runner.run(3, "gamma closed form", 1.0, [&] {
    const double q = gamma_constant(sp.lambda0, 1, 1.0);
    const double c = gamma_closed_form_1d(sp.lambda0, 1.0);
    const double err = std::abs(q - c);
    return Outcome{err <= 1e-10, fmt("quadrature %.12f closed form %.12f |diff| %.2e (tol 1e-10)", q, c, err)};
  });

  runner.run(4, "free-kernel equivalence", 30.0, [&] {
    DensityOptions o;
    o.checkpoints = {1.0, 4.0};
    const auto table = solve_density(PotentialSpec::piecewise(1, {}), grid, 0.0, o);
    double worst = 0.0, mass = 0.0;
    for (std::size_t c = 0; c < table.times.size(); ++c) {
      const double t = table.times[c];
      for (std::size_t i = 0; i < table.grid.size; ++i) {
        const double y = table.grid.x(i);
        if (std::abs(y) > 3.0 * std::sqrt(t)) continue;
        worst = std::max(worst, std::abs(table.values[c][i] / free_kernel(t, y) - 1.0));
      }
      mass = std::max(mass, std::abs(table.mass[c] - 1.0));
    }
    return Outcome{worst <= 1e-3 && mass <= 1e-6,
                   fmt("max rel err %.2e on |y| <= 3 sqrt(t) (tol 1e-3), mass err %.2e (tol 1e-6)", worst, mass)};
  });

  runner.run(5, "interior asymptotics", 120.0, [&] {
    DensityOptions o;
    o.checkpoints = {12.0, 24.0};
    o.shift = sp.lambda0;
    const auto table = solve_density(ref.potential, grid, 0.0, o);
    const double psi0 = sp.psi_at_coordinate(0.0);
    auto ratio = [&](double t) { return table.value(t, 0.0) * std::exp(-sp.lambda0 * t) / (psi0 * psi0); };
    const double r12 = ratio(12.0), r24 = ratio(24.0);
    const bool ok = r24 >= 0.98 && r24 <= 1.02 && std::abs(r24 - 1.0) < std::abs(r12 - 1.0);
    return Outcome{ok, fmt("ratio t=12 %.7f, t=24 %.7f (in [0.98, 1.02], |r-1| decreasing)", r12, r24)};
  });

  runner.run(6, "finite-time second moment", 300.0, [&] {
    const MomentTable g2 = compute_Gk(sp, ref.potential, grid, 2, 0.0);
    DensityOptions o;
    o.checkpoints = {20.0};
    o.shift = sp.lambda0;
    o.dense_trace = true;
    o.trace_lo = ref.potential.alpha_lo() - 2.0 * grid.h;
    o.trace_hi = ref.potential.alpha_hi() + 2.0 * grid.h;
    const auto table = solve_density(ref.potential, grid, 0.0, o);
    bool ok = true;
    std::string detail;
    for (double y : {2.0, -2.0}) {
      const auto fm = finite_time_mk(table, sp, ref.potential, grid, y, 20.0, 2);
      const double ball = sp.psi_ball_integral(y, 1.0);
      const double r = fm.m[1] / (std::exp(2.0 * sp.lambda0 * 20.0) * ball * ball * g2.G_at(2, 0.0));
      ok = ok && r >= 0.97 && r <= 1.03;
      detail += fmt("y=%+.0f ratio %.5f  ", y, r);
    }
    return Outcome{ok, detail + "(in [0.97, 1.03] at t = 20)"};
  });

  // Criteria 7-10 share one ensemble run through the pipeline.
  ExperimentConfig mc_config = ref;
  mc_config.gamma_lo = -1.0;
  mc_config.gamma_hi = 1.0;
  mc_config.checkpoints = {4.0, 8.0, 12.0};
  mc_config.k_max = 3;
  mc_config.mc.replicas = replicas;
  mc_config.mc.seed = seed;
  mc_config.mc.b_values = {1.0, 2.0};
  PipelineOptions popts;
  popts.out = std::filesystem::path(workdir) / "ensemble";
  popts.use_cache = false;
  popts.deterministic_reduce = true;
  Pipeline pipeline(validate(mc_config), popts);
  ComparisonReport report;
  const auto ens_start = std::chrono::steady_clock::now();
  std::string ensemble_error;
  try {
    report = pipeline.compare();
    emit(report, popts.out);
  } catch (const std::exception& e) {
    ensemble_error = e.what();
  }
  const double ens_secs = seconds_since(ens_start);
  std::printf("       ensemble: %lld replicas, checkpoints {4, 8, 12}, b in {0, 1, 2}, %.1f s\n",
              static_cast<long long>(replicas), ens_secs);

  auto row = [&](const std::vector<ReportRow>& rows, double t, int k, double b) -> const ReportRow& {
    for (const auto& r : rows)
      if (r.t == t && r.k == k && r.b == b) return r;
    throw std::runtime_error(fmt("no report row t=%g k=%d b=%g", t, k, b));
  };
  auto ensemble_outcome = [&](const std::function<Outcome()>& body) {
    if (!ensemble_error.empty()) return Outcome{false, "ensemble failed: " + ensemble_error};
    try {
      return body();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  runner.finish(7, "main theorem, k = 1", 600.0, ens_secs, ensemble_outcome([&] {
                  bool ok = replicas >= 5000;
                  std::string detail;
                  for (double t : {8.0, 12.0}) {
                    const auto& r = row(report.rows, t, 1, 0.0);
                    const double z = (r.empirical - 1.0) / r.se;
                    ok = ok && std::abs(z) <= 3.0;
                    detail += fmt("t=%g eta %.4f +- %.4f (z %+.2f)  ", t, r.empirical, r.se, z);
                  }
                  return Outcome{ok, detail + "(|z| <= 3)"};
                }));

  runner.finish(8, "front moments k = 2, 3", 900.0, ens_secs, ensemble_outcome([&] {
                  bool ok = true;
                  std::string detail;
                  for (int k : {2, 3}) {
                    const auto& r12 = row(report.rows, 12.0, k, 0.0);
                    const auto& r8 = row(report.rows, 8.0, k, 0.0);
                    const double band = std::max(0.10 * r12.theory, 3.0 * r12.se);
                    const double gap12 = std::abs(r12.empirical - r12.theory), gap8 = std::abs(r8.empirical - r8.theory);
                    ok = ok && gap12 <= band && gap12 < gap8;
                    detail += fmt("k=%d: t=12 %.4f +- %.4f vs %.4f (|d| %.3f <= %.3f), gap t=8 %.3f -> t=12 %.3f  ", k,
                                  r12.empirical, r12.se, r12.theory, gap12, band, gap8, gap12);
                  }
                  return Outcome{ok, detail};
                }));

  runner.finish(9, "b-dependence", 1800.0, ens_secs, ensemble_outcome([&] {
                  const MomentTable table = compute_Gk(sp, ref.potential, grid, 2, 0.0);
                  const double f2 = limit_moments_interior(table, 0.0)[1];
                  const double kappa = sp.decay_rate();
                  std::vector<double> logs;
                  for (double b : {0.0, 1.0, 2.0})
                    logs.push_back(std::log(limit_moments_front(table, sp, b, plus, 0.0)[1] - f2));
                  double worst = 0.0;
                  for (std::size_t i = 1; i < logs.size(); ++i)
                    worst = std::max(worst, std::abs((logs[i] - logs[i - 1]) + kappa) / kappa);
                  const double e0 = row(report.rows, 12.0, 2, 0.0).empirical;
                  const double e1 = row(report.sweep, 12.0, 2, 1.0).empirical;
                  const double e2 = row(report.sweep, 12.0, 2, 2.0).empirical;
                  const double t0 = row(report.rows, 12.0, 2, 0.0).theory;
                  const double t1 = row(report.sweep, 12.0, 2, 1.0).theory;
                  const double t2 = row(report.sweep, 12.0, 2, 2.0).theory;
                  const bool ranks = (t0 > t1 && t1 > t2) == (e0 > e1 && e1 > e2) && (t0 > t1 && t1 > t2);
                  return Outcome{worst <= 0.02 && ranks,
                                 fmt("slope rel err %.2e (tol 2e-2); E eta^2 at t=12: %.4f, %.4f, %.4f; theory %.4f, "
                                     "%.4f, %.4f",
                                     worst, e0, e1, e2, t0, t1, t2)};
                }));

  runner.finish(10, "martingale invariant", 600.0, ens_secs, ensemble_outcome([&] {
                  const auto& m = report.diagnostics.at("martingale");
                  const double target = m.at("target").get<double>();
                  bool ok = true;
                  std::string detail = fmt("psi(0) %.5f; ", target);
                  for (const auto& r : m.at("rows")) {
                    const double z = r.at("z").get<double>();
                    ok = ok && std::abs(z) <= 3.0;
                    detail += fmt("t=%g %.5f +- %.5f (z %+.2f)  ", r.at("t").get<double>(),
                                  r.at("value").at("mean").get<double>(), r.at("value").at("stderr").get<double>(), z);
                  }
                  return Outcome{ok, detail};
                }));

  runner.run(11, "front speed", 600.0, [&] {
    ExperimentConfig c = ref;
    c.checkpoints = {16.0};
    c.k_max = 1;
    c.mc.seed = seed + 1;
    const SimulationSetup setup = make_simulation(validate(c), sp);
    const auto reps = run_ensemble(setup, 0, static_cast<std::uint64_t>(speed_replicas));
    const auto rows = front_statistics(reps);
    const double target = std::sqrt(sp.lambda0 / 2.0);
    const double med = rows.at(0).median_speed;
    const double rel = std::abs(med - target) / target;
    return Outcome{rel <= 0.10, fmt("median R_16/16 %.4f vs %.4f (rel %.3f, tol 0.10), %zu survivors", med, target,
                                    rel, rows.at(0).survivors)};
  });

  runner.run(12, "Carleman diagnostics", 60.0, [&] {
    const MomentTable g8 = compute_Gk(sp, ref.potential, grid, 8, 0.0);
    const auto integrals = semigroup_integrals(sp, ref.potential, grid, 8, -1.0, 1.0);
    const auto carleman = carleman_diagnostics(g8, integrals, -1.0, 1.0);
    bool f1_exact = true;
    double f_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g8.grid.size; ++i) {
      const double x = g8.grid.x(i);
      f1_exact = f1_exact && g8.f(1, x) == 1.0;
      if (std::abs(x) <= 1.0 + 1e-12)
        for (int k = 2; k <= 8; ++k) f_min = std::min(f_min, g8.f(k, x));
    }
    double worst = 0.0;
    for (std::size_t n = 0; n < carleman.ratio.size(); ++n) worst = std::max(worst, carleman.ratio[n]);
    return Outcome{!carleman.violated && f1_exact && f_min >= 1.0,
                   fmt("A %.4f, max ||f^n|| / A^(2n-1) n! %.2e (n <= 8), f^1 == 1: %s, min f^k on Gamma %.4f",
                       carleman.A, worst, f1_exact ? "yes" : "no", f_min)};
  });

  std::printf("%s: %d of 12 criteria failed\n", runner.failures ? "FAILED" : "ALL PASSED", runner.failures);
  return runner.failures == 0 ? 0 : 1;
}
