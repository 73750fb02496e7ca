// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bbmf/errors.hpp"
#include "bbmf/heatkernel.hpp"
#include "bbmf/numerics.hpp"
#include "bbmf/spectral.hpp"

using namespace bbmf;

namespace {

const ExperimentConfig& ref() {
  static const ExperimentConfig c = square_well_config();
  return c;
}

const SpectralData& spectral() {
  static const SpectralData sp = principal_eigenpair(ref().potential, ref().grid);
  return sp;
}

HeatKernelTable ref_solve(double x0, std::vector<double> checkpoints, GridSpec grid = ref().grid) {
  DensityOptions o;
  o.checkpoints = std::move(checkpoints);
  o.shift = spectral().lambda0;
  return solve_density(ref().potential, grid, x0, o);
}

const HeatKernelTable& ref_table() {
  static const HeatKernelTable t = ref_solve(0.0, {1.0, 2.0, 4.0, 8.0, 12.0, 20.0});
  return t;
}

HeatKernelTable free_solve(double x0, std::vector<double> checkpoints) {
  DensityOptions o;
  o.checkpoints = std::move(checkpoints);
  return solve_density(PotentialSpec::piecewise(1, {}), ref().grid, x0, o);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("free kernel values, normalization and scaling") {
  CHECK(free_kernel(1.0, 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(free_kernel(1.0, 0.0) == doctest::Approx(0.39894).epsilon(1e-5));
  for (double t : {0.5, 1.0, 4.0}) {
    const double h = 0.01;
    std::vector<double> f;
    for (double y = -40.0; y <= 40.0 + 1e-12; y += h) f.push_back(free_kernel(t, y));
    CHECK(std::abs(trapezoid(f, h) - 1.0) <= 1e-8);
  }
  for (int d = 1; d <= 3; ++d) {
    std::vector<double> y(d, 0.4), cy(d, 0.4 * 1.7);
    const double lhs = free_kernel(1.7 * 1.7 * 2.5, cy, d);
    const double rhs = std::pow(1.7, -d) * free_kernel(2.5, y, d);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
  }
  CHECK(free_kernel(4.0, std::vector<double>{2.0}, 1) == doctest::Approx(free_kernel(4.0, 2.0)).epsilon(1e-15));
}

TEST_CASE("v = 0 reproduces the free kernel and conserves mass") {
  const double x0 = 0.5;
  const auto table = free_solve(x0, {1.0, 4.0, 9.0});
  for (std::size_t c = 0; c < table.times.size(); ++c) {
    const double t = table.times[c];
    double worst = 0.0;
    for (std::size_t i = 0; i < table.grid.size; ++i) {
      const double z = table.grid.x(i);
      if (std::abs(z - x0) > 3.0 * std::sqrt(t)) continue;
      worst = std::max(worst, std::abs(table.values[c][i] / free_kernel(t, z - x0) - 1.0));
    }
    CHECK(worst <= 1e-3);
    CHECK(std::abs(table.mass[c] - 1.0) <= 1e-6);
  }
}

TEST_CASE("square-well density") {
  const auto& sp = spectral();
  const auto& table = ref_table();
  const double psi0 = sp.psi_at_coordinate(0.0);
  CHECK(table.value(20.0, 0.0) * std::exp(-20.0 * sp.lambda0) == doctest::Approx(psi0 * psi0).epsilon(0.02));
  for (std::size_t c = 1; c < table.mass.size(); ++c) CHECK(table.mass[c] >= table.mass[c - 1]);
  CHECK(table.min_value() >= 0.0);
  for (double b : table.boundary_ratio) CHECK(b <= 1e-10);
}

TEST_CASE("density is symmetric in source and target") {
  const auto a = ref_solve(0.0, {4.0, 8.0});
  const auto b = ref_solve(1.0, {4.0, 8.0});
  CHECK(symmetry_error(a, b) <= 1e-3);
  const auto c = ref_solve(-2.5, {4.0, 8.0});
  CHECK(symmetry_error(a, c) <= 1e-3);
}

TEST_CASE("second-order convergence of the ball mass") {
  const double t = 8.0;
  const double y = front_distance(ref().front, spectral().lambda0, t);
  auto ratio = [&](std::vector<GridSpec> levels) {
    std::vector<double> m;
    for (const auto& g : levels) m.push_back(first_moment(spectral(), ref_solve(0.0, {t}, g), y, t).value);
    return (m[0] - m[1]) / (m[1] - m[2]);
  };
  auto level = [&](double h, double dt) {
    GridSpec g = ref().grid;
    g.h = h;
    g.dt = dt;
    return g;
  };
  const double joint = ratio({level(0.02, 0.02), level(0.01, 0.01), level(0.005, 0.005)});
  const double space = ratio({level(0.04, 0.01), level(0.02, 0.01), level(0.01, 0.01)});
  const double time = ratio({level(0.01, 0.04), level(0.01, 0.02), level(0.01, 0.01)});
  for (double r : {joint, space, time}) {
    CHECK(r >= 3.0);
    CHECK(r <= 5.0);
  }
}

TEST_CASE("regime classification") {
  const double l = spectral().lambda0;
  const std::vector<double> x{0.0};
  CHECK(classify_regime(10.0, x, std::vector<double>{5.0}, l, 0.1).kind == RegimeKind::interior);
  CHECK(classify_regime(10.0, x, std::vector<double>{5.0}, l, 0.1).theta == doctest::Approx(0.5));
  CHECK(classify_regime(10.0, x, std::vector<double>{20.0}, l, 0.1).kind == RegimeKind::exterior);
  CHECK(classify_regime(10.0, x, std::vector<double>{20.0}, l, 0.1).theta == doctest::Approx(2.0));
  CHECK(classify_regime(10.0, x, std::vector<double>{-11.0}, l, 0.1).kind == RegimeKind::intermediate);
  for (double t : {10.0, 50.0, 200.0, 1000.0}) {
    const auto y = front_center(ref().front, l, t);
    CHECK(classify_regime(t, x, y, l, 0.1).kind == RegimeKind::interior);
  }
}

TEST_CASE("interior asymptotic") {
  const auto& sp = spectral();
  const std::vector<double> o{0.0}, y{2.0};
  const double psi0 = sp.psi_at_coordinate(0.0);
  CHECK(interior_asymptotic(sp, 20.0, o, o, 0.1) ==
        doctest::Approx(std::exp(20.0 * sp.lambda0) * psi0 * psi0).epsilon(1e-14));
  CHECK(interior_asymptotic(sp, 12.0, o, y, 0.1) == interior_asymptotic(sp, 12.0, y, o, 0.1));
  try {
    interior_asymptotic(sp, 10.0, o, std::vector<double>{20.0}, 0.1);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("wrong regime") != std::string::npos);
  }
}

TEST_CASE("interior ratio on the half cone") {
  const auto& sp = spectral();
  const auto& table = ref_table();
  const double t = 20.0, reach = 0.5 * sp.decay_rate() * t;
  const double psi0 = sp.psi_at_coordinate(0.0);
  double lo = 1e9, hi = 0.0;
  for (std::size_t i = 0; i < table.grid.size; ++i) {
    const double y = table.grid.x(i);
    if (std::abs(y) > reach) continue;
    const double r = table.value(t, y) * std::exp(-sp.lambda0 * t) / (psi0 * sp.psi_at_coordinate(y));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  CHECK(lo >= 0.95);
  CHECK(hi <= 1.05);
}

TEST_CASE("exterior excess over the free kernel stays bounded") {
  const auto& table = ref_table();
  const double l = spectral().lambda0;
  const double e8 = exterior_log_excess(table, l, 0.3, 3);
  const double e12 = exterior_log_excess(table, l, 0.3, 4);
  const double e20 = exterior_log_excess(table, l, 0.3, 5);
  CHECK(std::isfinite(e8));
  CHECK(e12 <= e8 + 0.5);
  CHECK(e20 <= e8 + 0.5);
}

TEST_CASE("first moment") {
  SUBCASE("free case") {
    const double x0 = 0.3, t = 4.0, y = 1.5;
    const auto table = free_solve(x0, {t});
    const double exact = normal_cdf((y + 1.0 - x0) / std::sqrt(t)) - normal_cdf((y - 1.0 - x0) / std::sqrt(t));
    CHECK(first_moment(spectral(), table, y, t).value == doctest::Approx(exact).epsilon(1e-4));
  }
  SUBCASE("far-field form at the front") {
    const auto& sp = spectral();
    const double t = 12.0;
    const double y = front_distance(ref().front, sp.lambda0, t);
    const auto fm = first_moment(sp, ref_table(), y, t);
    const double far = sp.gamma * sp.tail.constants[1] * sp.psi_at_coordinate(0.0) *
                       std::exp(sp.lambda0 * t - sp.decay_rate() * y);
    CHECK(fm.far == doctest::Approx(far).epsilon(1e-10));
    CHECK(fm.value / fm.far == doctest::Approx(1.0).epsilon(0.05));
    CHECK(fm.value / fm.mid == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("ball outside the grid") {
    CHECK_THROWS(first_moment(spectral(), ref_table(), 39.5, 12.0));
  }
}

TEST_CASE("crude first-moment bound holds after calibration") {
  std::vector<HeatKernelTable> tables;
  for (double x0 : {-0.5, 0.0, 0.5, 1.5})
    tables.push_back(ref_solve(x0, {1.0, 2.0, 4.0, 8.0, 12.0}));
  const auto bound = crude_first_moment_bound(spectral(), tables, 1.0, 30.0);
  CHECK(bound.c1 > 0.0);
  CHECK(bound.checked > 0);
  CHECK(bound.violations == 0);
  CHECK(bound.worst <= 1.0);
  CHECK_THROWS_AS(crude_first_moment_bound(spectral(), tables, 3.0, 30.0), NumericalError);
}

TEST_CASE("serial and parallel paths agree bit for bit") {
  DensityOptions o;
  o.checkpoints = {2.0, 5.0};
  o.shift = spectral().lambda0;
  const std::vector<double> sources{-0.5, 0.0, 0.7, 2.0};
  const auto s = solve_density_batch(ref().potential, ref().grid, sources, o, Execution::serial);
  const auto p = solve_density_batch(ref().potential, ref().grid, sources, o, Execution::parallel);
  REQUIRE(s.size() == p.size());
  for (std::size_t k = 0; k < s.size(); ++k) CHECK(s[k].values == p[k].values);

  const auto& table = ref_table();
  const auto ms = ball_mass_profile(table.grid, table.values[4], 1.0, Execution::serial);
  const auto mp = ball_mass_profile(table.grid, table.values[4], 1.0, Execution::parallel);
  CHECK(ms == mp);
  const std::size_t i = table.grid.nearest(3.0);
  CHECK(ms[i] == doctest::Approx(integrate_linear(table.grid, table.values[4], 2.0, 4.0)).epsilon(1e-12));
}
