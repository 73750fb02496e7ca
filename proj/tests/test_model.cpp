// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "bbmf/config_io.hpp"
#include "bbmf/errors.hpp"
#include "bbmf/model.hpp"
#include "bbmf/numerics.hpp"

using namespace bbmf;

TEST_CASE("square well config is valid") {
  const auto v = validate(square_well_config());
  CHECK(v.sup_alpha == 1.0);
  CHECK(v.sup_beta == 0.0);
  CHECK(v.total_rate == 1.0);
  CHECK(v.support_radius == 1.0);
  CHECK(check(square_well_config()).empty());
}

TEST_CASE("validation reports every violation with its field") {
  SUBCASE("direction not unit") {
    auto c = square_well_config();
    c.front.direction = {0.9};
    try {
      validate(c);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.mentions("direction not unit"));
      CHECK(e.violations().front().field == "front.direction");
    }
  }
  SUBCASE("no buffer around the front") {
    auto c = square_well_config();
    c.grid.half_width = std::sqrt(0.5) * c.checkpoints.back();
    try {
      validate(c);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.mentions("domain too small"));
    }
  }
  SUBCASE("several at once") {
    auto c = square_well_config();
    c.checkpoints = {12.0, 8.0};
    c.k_max = 0;
    c.grid.h = -1.0;
    const auto v = check(c);
    CHECK(v.size() >= 3);
    try {
      validate(c);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.mentions("strictly increasing"));
      CHECK(e.mentions("k_max"));
      CHECK(e.mentions("spacing"));
    }
  }
  SUBCASE("negative rate") {
    auto c = square_well_config();
    c.potential = PotentialSpec::piecewise(1, {{-1.0, 1.0, -1.0, 0.0}});
    CHECK_THROWS_AS(validate(c), ConfigError);
  }
}

TEST_CASE("front_center examples") {
  FrontSchedule f;
  f.direction = {1.0};
  CHECK(front_center(f, 0.5, 10.0)[0] == doctest::Approx(5.0).epsilon(1e-14));

  FrontSchedule f3;
  f3.direction = {0.0, 0.0, 1.0};
  const auto y = front_center(f3, 2.0, std::numbers::e);
  CHECK(y[0] == 0.0);
  CHECK(y[2] == doctest::Approx(std::numbers::e - 0.5).epsilon(1e-14));

  // sqrt(lambda0 / 2) * 12 with the square-well eigenvalue 0.6038978.
  CHECK(front_center(f, 0.603897834, 12.0)[0] == doctest::Approx(6.594).epsilon(1e-3));

  FrontSchedule diverging = f;
  diverging.mode = OffsetMode::log;
  diverging.coef = 100.0;
  CHECK_THROWS_AS(front_center(diverging, 0.6, 10.0), ConfigError);
  CHECK_THROWS_AS(front_center(f, 0.6, 1.0), ConfigError);
}

TEST_CASE("front distance is strictly increasing for constant b in d = 1") {
  FrontSchedule f;
  double prev = front_distance(f, 0.6039, 1.5);
  for (double t = 2.0; t <= 40.0; t += 0.5) {
    const double d = front_distance(f, 0.6039, t);
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("evaluate_potential on the square well") {
  const auto p = square_well_config().potential;
  auto at = [&](double x) { return evaluate_potential(p, std::vector<double>{x}); };
  CHECK(at(0.0).alpha == 1.0);
  CHECK(at(0.0).beta == 0.0);
  CHECK(at(0.0).v() == 1.0);
  CHECK(at(2.0).alpha == 0.0);
  CHECK(at(2.0).v() == 0.0);
  CHECK(at(1.0).alpha == 1.0);
  CHECK(at(-1.0).v() == 1.0);
}

TEST_CASE("v = alpha - beta at every grid point") {
  const auto p = PotentialSpec::piecewise(1, {{-2.0, -0.5, 0.7, 0.2}, {-0.5, 1.5, 1.3, 0.4}});
  const auto g = Grid1D::symmetric(4.0, 0.05);
  for (std::size_t i = 0; i < g.size; ++i) {
    const auto r = evaluate_potential(p, std::vector<double>{g.x(i)});
    CHECK(r.v() == r.alpha - r.beta);
  }
  CHECK(p.sup_alpha() == 1.3);
  CHECK(p.sup_beta() == 0.4);
  CHECK(p.support_radius() == 2.0);
}

TEST_CASE("tabulated potentials interpolate linearly and vanish outside") {
  const auto p = PotentialSpec::tabulated(1, {-1.0, 0.0, 1.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 0.0});
  CHECK(p.at_coordinate(0.5).alpha == doctest::Approx(1.0));
  CHECK(p.at_coordinate(-0.25).alpha == doctest::Approx(1.5));
  CHECK(p.at_coordinate(1.5).alpha == 0.0);
  CHECK(p.sup_alpha() == 2.0);
}

TEST_CASE("cell averages are exact for piecewise potentials") {
  const auto p = square_well_config().potential;
  CHECK(p.cell_average(0.5, 1.5).alpha == doctest::Approx(0.5));
  CHECK(p.cell_average(-0.2, 0.2).alpha == doctest::Approx(1.0));
}

TEST_CASE("config file parsing, environment overrides and unknown keys") {
  const std::string text =
      "[potential]\ndimension = 1\npieces = -1 1 1 0\n"
      "[experiment]\nx0 = 0\ncheckpoints = 8,12\nk_max = 2\n"
      "[front]\ndirection = 1\nmode = log\ncoef = 0.5\n"
      "[grid]\nh = 0.02\n"
      "[mc]\nreplicas = 300\nseed = 42\nb_values = 1,2\n";
  std::istringstream in(text);
  auto c = parse_config(in, {{"mc.replicas", "77"}, {"grid.dt", "0.005"}});
  CHECK(c.k_max == 2);
  CHECK(c.front.mode == OffsetMode::log);
  CHECK(c.front.coef == 0.5);
  CHECK(c.grid.h == 0.02);
  CHECK(c.grid.dt == 0.005);
  CHECK(c.mc.replicas == 77);
  CHECK(c.mc.seed == 42);
  CHECK(c.mc.b_values == std::vector<double>{1.0, 2.0});
  CHECK(c.potential == square_well_config().potential);

  std::istringstream bad("[grid]\nspacing = 0.1\n");
  CHECK_THROWS_AS(parse_config(bad), ConfigError);
  std::istringstream bad_seed("[mc]\nseed = -4\n");
  CHECK_THROWS_AS(parse_config(bad_seed), ConfigError);

  const auto over = apply_overrides(c, {{"experiment.k_max", "5"}});
  CHECK(over.k_max == 5);
  CHECK(over.potential == c.potential);
  CHECK(over.mc == c.mc);
}

TEST_CASE("environment overrides use the BBMF_<SECTION>_<KEY> form") {
  ::setenv("BBMFTEST_MC_BATCHES", "40", 1);
  ::setenv("BBMFTEST_GRID_SOURCE_SPACING", "0.2", 1);
  const auto o = environment_overrides("BBMFTEST_");
  ::unsetenv("BBMFTEST_MC_BATCHES");
  ::unsetenv("BBMFTEST_GRID_SOURCE_SPACING");
  CHECK(o.at("mc.batches") == "40");
  CHECK(o.at("grid.source_spacing") == "0.2");
}

TEST_CASE("validated configs round-trip through JSON") {
  auto c = square_well_config();
  c.mc.b_values = {0.5, 1.5};
  c.front.mode = OffsetMode::power;
  c.front.coef = 0.3;
  c.front.exponent = 0.4;
  const auto v = validate(c);
  const nlohmann::json j = v;
  CHECK(j.get<ValidatedConfig>() == v);
  CHECK(nlohmann::json::parse(j.dump()).get<ValidatedConfig>() == v);

  const auto tab = PotentialSpec::tabulated(1, {-1.0, 0.0, 1.0}, {0.0, 2.0, 0.0}, {0.1, 0.0, 0.1});
  const nlohmann::json jt = tab;
  CHECK(jt.get<PotentialSpec>() == tab);
}

TEST_CASE("content hashes are stable and sensitive") {
  const nlohmann::json a = square_well_config();
  auto c = square_well_config();
  c.mc.seed = 2;
  const nlohmann::json b = c;
  CHECK(content_hash(a) == content_hash(nlohmann::json::parse(a.dump())));
  CHECK(content_hash(a) != content_hash(b));
  CHECK(hex_hash(content_hash(a)).size() == 16);
}
