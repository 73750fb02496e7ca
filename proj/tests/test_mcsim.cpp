// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bbmf/heatkernel.hpp"
#include "bbmf/mcsim.hpp"
#include "bbmf/philox.hpp"
#include "bbmf/pipeline.hpp"
#include "bbmf/spectral.hpp"

using namespace bbmf;

namespace {

const SpectralData& spectral() {
  static const SpectralData sp = principal_eigenpair(square_well_config().potential, GridSpec{});
  return sp;
}

SimulationSetup ref_setup(std::vector<double> checkpoints, std::uint64_t seed) {
  auto c = square_well_config();
  c.checkpoints = std::move(checkpoints);
  c.mc.seed = seed;
  return make_simulation(validate(c), spectral());
}

SimulationSetup plain_setup(PotentialSpec potential, std::vector<double> checkpoints,
                            std::vector<double> centers = {}, double x0 = 0.0) {
  SimulationSetup s;
  s.potential = std::move(potential);
  s.x0 = {x0};
  s.seed = 99;
  s.observe.checkpoints = checkpoints;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) s.observe.centers.push_back(centers);
  return s;
}

std::vector<double> counts(const std::vector<ReplicaResult>& rs, std::size_t c, std::size_t b) {
  std::vector<double> v;
  for (const auto& r : rs) v.push_back(static_cast<double>(r.obs[c].counts[b]));
  return v;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Survival E exp(-int_0^t beta(B_s) ds) from x0 by explicit finite differences on [-L, L], u = 1 at the ends.
double killing_survival(double beta, double half, double t, double x0) {
  const double L = 12.0, h = 0.02, dt = 0.4 * h * h;
  const auto n = static_cast<std::size_t>(std::llround(2.0 * L / h)) + 1;
  std::vector<double> u(n, 1.0), next(n, 1.0), rate(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = -L + static_cast<double>(i) * h;
    const double lo = std::max(x - 0.5 * h, -half), hi = std::min(x + 0.5 * h, half);
    rate[i] = beta * std::max(0.0, hi - lo) / h;
  }
  const auto steps = static_cast<long>(std::llround(t / dt));
  for (long s = 0; s < steps; ++s) {
    for (std::size_t i = 1; i + 1 < n; ++i)
      next[i] = u[i] + dt * (0.5 * (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (h * h) - rate[i] * u[i]);
    std::swap(u, next);
  }
  const double pos = (x0 + L) / h;
  const auto i = static_cast<std::size_t>(pos);
  return u[i] + (pos - static_cast<double>(i)) * (u[i + 1] - u[i]);
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
  CHECK(unit_open(0, 0) > 0.0);
  CHECK(unit_open(0xffffffff, 0xffffffff) <= 1.0);
  CHECK(unit_open(0xffffffff, 0xfffff000) < 1.0);
}

TEST_CASE("batch means") {
  const std::vector<double> flat(300, 2.5);
  const auto e = batch_mean(flat, 30);
  CHECK(e.mean == 2.5);
  CHECK(e.se == 0.0);
  std::vector<double> ramp(600);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = std::sin(0.37 * static_cast<double>(i));
  const auto a = batch_mean(ramp, 30, Reduction::fixed_order);
  const auto b = batch_mean(ramp, 30, Reduction::unordered);
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-12));
  CHECK(a.se == doctest::Approx(b.se).epsilon(1e-9));
  CHECK(a.se > 0.0);
}

TEST_CASE("replicas are reproducible under any scheduling") {
  auto setup = ref_setup({2.0, 4.0}, 4242);
  const auto a = run_ensemble(setup, 0, 120, Execution::parallel);
  const auto b = run_ensemble(setup, 0, 120, Execution::serial);
  std::vector<ReplicaResult> reversed;
  for (std::uint64_t r = 120; r-- > 0;) reversed.push_back(simulate_replica(setup, r));
  std::reverse(reversed.begin(), reversed.end());
  auto merged = run_ensemble(setup, 0, 50);
  const auto rest = run_ensemble(setup, 50, 70);
  merged.insert(merged.end(), rest.begin(), rest.end());

  const std::vector<std::vector<double>> m1{std::vector<double>(setup.observe.centers[0].size() / 1, 1.0),
                                            std::vector<double>(setup.observe.centers[1].size() / 1, 1.0)};
  auto summary = [&](const std::vector<ReplicaResult>& rs) {
    return nlohmann::json(estimate_moments(rs, m1, 3, 30)).dump();
  };
  const auto ref = summary(a);
  CHECK(summary(b) == ref);
  CHECK(summary(reversed) == ref);
  CHECK(summary(merged) == ref);
  CHECK(summary(run_ensemble(setup, 0, 120)) == ref);
  CHECK(nlohmann::json(estimate_moments(a, m1, 3, 30, Execution::parallel)).dump() == ref);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].branches == b[i].branches);
    CHECK(a[i].obs[1].max_norm == reversed[i].obs[1].max_norm);
  }

  setup.seed = 4243;
  CHECK(summary(run_ensemble(setup, 0, 120)) != ref);
}

TEST_CASE("pure diffusion") {
  const double x0 = 0.3, y = 1.5, t = 4.0;
  auto setup = plain_setup(PotentialSpec::piecewise(1, {}), {t, 16.0}, {y}, x0);
  const auto rs = run_ensemble(setup, 0, 10000);
  const auto e = batch_mean(counts(rs, 0, 0), 50);
  const double exact = normal_cdf((y + 1.0 - x0) / std::sqrt(t)) - normal_cdf((y - 1.0 - x0) / std::sqrt(t));
  CHECK(std::abs(e.mean - exact) <= 3.0 * e.se);
  for (const auto& r : rs) {
    CHECK(r.obs[0].population == 1);
    CHECK(r.obs[1].martingale == 1.0);
    CHECK(r.branches == 0);
  }
  const auto front = front_statistics(rs);
  CHECK(front[1].median_speed < 0.2);
  const auto mart = martingale_check(rs, 1.0, 30);
  CHECK_FALSE(mart.flagged);
}

TEST_CASE("killing-only survival matches a Feynman-Kac finite-difference oracle") {
  const double t = 2.0;
  auto setup = plain_setup(PotentialSpec::piecewise(1, {{-1.0, 1.0, 0.0, 1.0}}), {t});
  const auto rs = run_ensemble(setup, 0, 20000);
  std::vector<double> alive;
  for (const auto& r : rs) {
    CHECK(r.obs[0].population <= 1);
    alive.push_back(r.survived ? 1.0 : 0.0);
  }
  const auto e = batch_mean(alive, 50);
  const double oracle = killing_survival(1.0, 1.0, t, 0.0);
  CHECK(oracle > 0.2);
  CHECK(oracle < 0.5);
  CHECK(std::abs(e.mean - oracle) <= 3.0 * e.se);
}

TEST_CASE("strong killing without branching") {
  auto setup = plain_setup(PotentialSpec::piecewise(1, {{-1.0, 1.0, 0.0, 5.0}}), {10.0}, {0.0});
  const auto rs = run_ensemble(setup, 0, 3000);
  std::vector<ReplicaResult> extinct;
  for (const auto& r : rs)
    if (!r.survived) extinct.push_back(r);
  CHECK(static_cast<double>(extinct.size()) / rs.size() > 0.9);
  extinct.resize(60);
  const auto s = estimate_moments(extinct, {{0.2}}, 3, 30);
  const auto& c = s.checkpoints[0];
  CHECK(c.survivors == 0);
  CHECK(c.unreliable);
  for (const auto& e : c.balls[0].eta) {
    CHECK(e.mean == 0.0);
    CHECK(e.se == 0.0);
  }
  CHECK(c.population.mean == 0.0);
  REQUIRE_FALSE(s.warnings.empty());
  CHECK(s.warnings.back().find("estimates unreliable") != std::string::npos);
}

TEST_CASE("square-well ensemble") {
  const auto setup = ref_setup({4.0, 8.0, 12.0}, 31337);
  const auto rs = run_ensemble(setup, 0, 3000);

  for (const auto& r : rs) {
    CHECK(r.deaths == 0);
    for (std::size_t c = 1; c < r.obs.size(); ++c) CHECK(r.obs[c].population >= r.obs[c - 1].population);
  }

  DensityOptions o;
  o.checkpoints = {4.0, 8.0, 12.0};
  o.shift = spectral().lambda0;
  const auto table = solve_density(square_well_config().potential, GridSpec{}, 0.0, o);
  std::vector<double> pop;
  for (const auto& r : rs) pop.push_back(static_cast<double>(r.obs[2].population));
  const auto e = batch_mean(pop, 30);
  CHECK(std::abs(e.mean - table.mass[2]) <= 3.0 * e.se);

  std::vector<std::vector<double>> m1;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> row;
    for (std::size_t b = 0; b < setup.observe.centers[c].size(); ++b)
      row.push_back(first_moment(spectral(), table, setup.observe.centers[c][b], table.times[c]).value);
    m1.push_back(row);
  }
  const auto s = estimate_moments(rs, m1, 2, 30);
  for (const auto& c : s.checkpoints)
    for (const auto& b : c.balls) CHECK(std::abs(b.eta[0].mean - 1.0) <= 3.0 * b.eta[0].se);

  const auto mart = martingale_check(rs, spectral().psi_at_coordinate(0.0), 30);
  CHECK_FALSE(mart.flagged);
  for (const auto& row : mart.rows) CHECK(std::abs(row.z) <= 3.0);
}

TEST_CASE("martingale at small times and positions within R_t") {
  auto setup = ref_setup({2.0, 3.0}, 5);
  setup.observe.checkpoints = {0.05, 3.0};
  setup.observe.keep_positions = true;
  const auto rs = run_ensemble(setup, 0, 400);
  const double psi0 = spectral().psi_at_coordinate(0.0);
  std::vector<double> early;
  for (const auto& r : rs) {
    early.push_back(r.obs[0].martingale);
    for (const auto& o : r.obs)
      for (double x : o.positions) CHECK(std::abs(x) <= o.max_norm);
  }
  const auto e = batch_mean(early, 40);
  CHECK(std::abs(e.mean - psi0) <= std::max(3.0 * e.se, 1e-3));
}

TEST_CASE("population cap exclusions are counted") {
  auto setup = ref_setup({4.0, 12.0}, 8);
  setup.max_particles = 60;
  const auto rs = run_ensemble(setup, 0, 200);
  const auto flagged = std::count_if(rs.begin(), rs.end(), [](const ReplicaResult& r) { return r.excluded; });
  CHECK(flagged > 0);
  const std::vector<std::vector<double>> m1{std::vector<double>(setup.observe.centers[0].size(), 1.0),
                                            std::vector<double>(setup.observe.centers[1].size(), 1.0)};
  const auto s = estimate_moments(rs, m1, 2, 30);
  CHECK(s.excluded == static_cast<std::size_t>(flagged));
  CHECK(s.replicas + s.excluded == rs.size());
  CHECK_FALSE(s.warnings.empty());
}
