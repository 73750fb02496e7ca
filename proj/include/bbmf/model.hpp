// SPDX-License-Identifier: Apache-2.0
//
// Branching-diffusion model: compactly supported branching/killing rates, the
// moving observation ball (front schedule) and the validated experiment
// configuration shared by every other stage.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bbmf/errors.hpp"

namespace bbmf {

struct Rates {
  double alpha = 0.0;
  double beta = 0.0;
  double v() const noexcept { return alpha - beta; }
};

/// One closed interval [lo, hi] of constant rates. In d = 1 the interval is in
/// the coordinate x; for d >= 2 it is a radial shell lo <= |x| <= hi.
struct PotentialPiece {
  double lo = 0.0;
  double hi = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  bool operator==(const PotentialPiece&) const = default;
};

enum class PotentialKind { piecewise, tabulated };

class PotentialSpec {
 public:
  PotentialSpec() = default;

  static PotentialSpec piecewise(int dimension, std::vector<PotentialPiece> pieces);
  /// Linear interpolation between nodes; zero outside [nodes.front(), nodes.back()].
  static PotentialSpec tabulated(int dimension, std::vector<double> nodes, std::vector<double> alpha,
                                 std::vector<double> beta);

  int dimension() const noexcept { return dimension_; }
  PotentialKind kind() const noexcept { return kind_; }
  const std::vector<PotentialPiece>& pieces() const noexcept { return pieces_; }
  const std::vector<double>& nodes() const noexcept { return nodes_; }
  const std::vector<double>& table_alpha() const noexcept { return table_alpha_; }
  const std::vector<double>& table_beta() const noexcept { return table_beta_; }

  /// Radius L with alpha = beta = 0 for |x| > L.
  double support_radius() const noexcept { return support_radius_; }
  double sup_alpha() const noexcept { return sup_alpha_; }
  double sup_beta() const noexcept { return sup_beta_; }
  /// Dominating event rate used by the thinning simulator.
  double total_rate_bound() const noexcept { return sup_alpha_ + sup_beta_; }

  /// Rates at a point. Support is closed: boundary points take the interior value.
  Rates at(std::span<const double> x) const;
  /// Rates as a function of the reduced coordinate (x in d = 1, |x| otherwise).
  Rates at_coordinate(double s) const;
  /// Exact average of the rates over [lo, hi] in the reduced coordinate.
  Rates cell_average(double lo, double hi) const;

  /// Returns a copy with alpha (and only alpha) multiplied by `factor`.
  PotentialSpec scaled_alpha(double factor) const;

  /// Interval [lo, hi] of the reduced coordinate outside which alpha vanishes.
  double alpha_lo() const noexcept { return alpha_lo_; }
  double alpha_hi() const noexcept { return alpha_hi_; }

  bool operator==(const PotentialSpec&) const = default;

 private:
  void refresh();

  int dimension_ = 1;
  PotentialKind kind_ = PotentialKind::piecewise;
  std::vector<PotentialPiece> pieces_;
  std::vector<double> nodes_;
  std::vector<double> table_alpha_;
  std::vector<double> table_beta_;
  double support_radius_ = 0.0;
  double sup_alpha_ = 0.0;
  double sup_beta_ = 0.0;
  double alpha_lo_ = 0.0;
  double alpha_hi_ = 0.0;
};

/// (alpha, beta, v) at x.
Rates evaluate_potential(const PotentialSpec& spec, std::span<const double> x);

enum class OffsetMode { constant, log, power };

/// Offset b(t) of the observation ball behind the front. `constant` keeps b
/// fixed; `log` uses coef * ln t and `power` uses coef * t^exponent (exponent < 1).
struct FrontSchedule {
  std::vector<double> direction{1.0};
  OffsetMode mode = OffsetMode::constant;
  double b = 0.0;
  double coef = 0.0;
  double exponent = 0.5;

  int dimension() const noexcept { return static_cast<int>(direction.size()); }
  double offset(double t) const;
  bool operator==(const FrontSchedule&) const = default;
};

/// a(t) = sqrt(lambda0/2) t - (d-1)/(2 sqrt(2 lambda0)) ln t.
double front_position(double lambda0, int dimension, double t);
/// Signed distance |y(t)| = a(t) - b(t) along the direction.
double front_distance(const FrontSchedule& front, double lambda0, double t);
/// y(t) = (a(t) - b(t)) u. Requires t > 1 and lambda0 > 0.
std::vector<double> front_center(const FrontSchedule& front, double lambda0, double t);

struct GridSpec {
  double half_width = 40.0;  ///< M: the box is [-M, M]^d (radial: [0, M])
  double h = 0.01;
  double dt = 0.01;
  double t0 = 0.0;  ///< delta-smoothing time; 0 selects 10 * dt
  double epsilon = 0.1;  ///< interior-cone margin
  double r_max = 0.0;  ///< time-integral truncation for G_k; 0 selects 25 / lambda0
  double source_spacing = 0.1;  ///< coarse source spacing h_D for brute-force kernel sums

  double smoothing_time() const noexcept { return t0 > 0.0 ? t0 : 10.0 * dt; }
  bool operator==(const GridSpec&) const = default;
};

struct McSpec {
  std::int64_t replicas = 1000;
  std::uint64_t seed = 1;
  std::int64_t max_particles = 1'000'000;
  int batches = 30;
  std::vector<double> b_values;  ///< extra constant offsets recorded alongside front.b
  bool operator==(const McSpec&) const = default;
};

struct ExperimentConfig {
  PotentialSpec potential;
  std::vector<double> x0{0.0};
  double gamma_lo = 0.0;  ///< compact set Gamma (d = 1: [lo, hi]; d >= 2: ball of radius hi)
  double gamma_hi = 0.0;
  double ball_radius = 1.0;
  FrontSchedule front;
  std::vector<double> checkpoints{8.0, 12.0};
  GridSpec grid;
  McSpec mc;
  int k_max = 3;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Configuration after validation, with derived constants materialized.
struct ValidatedConfig {
  ExperimentConfig config;
  double sup_alpha = 0.0;
  double sup_beta = 0.0;
  double total_rate = 0.0;
  double support_radius = 0.0;
  double lambda_upper = 0.0;  ///< sup v, an upper bound for lambda0
  double horizon = 0.0;  ///< last checkpoint
  double front_bound = 0.0;  ///< upper bound on |y(T)| using lambda_upper
  double buffer = 0.0;  ///< 6 sqrt(T)
  double smoothing_time = 0.0;

  int dimension() const noexcept { return config.potential.dimension(); }
  bool operator==(const ValidatedConfig&) const = default;
};

/// Every violated invariant; empty when the configuration is valid.
std::vector<Violation> check(const ExperimentConfig& config);
/// Throws ConfigError listing all violations.
ValidatedConfig validate(const ExperimentConfig& config);

/// Reference configuration: d = 1, alpha = 1 on [-1, 1], beta = 0, x0 = 0.
ExperimentConfig square_well_config(double alpha0 = 1.0, double half_width_support = 1.0);

}  // namespace bbmf
