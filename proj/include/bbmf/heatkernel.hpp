// SPDX-License-Identifier: Apache-2.0
//
// Particle density rho_1(r, x0, z): Crank-Nicolson solution of
// d/dr u = 1/2 u'' + v u started from a smoothed point mass, plus the free
// kernel, regime classification and the first moment over a ball.
#pragma once

#include <span>
#include <vector>

#include "bbmf/model.hpp"
#include "bbmf/numerics.hpp"
#include "bbmf/parallel.hpp"
#include "bbmf/spectral.hpp"

namespace bbmf {

struct DensityOptions {
  std::vector<double> checkpoints;  ///< strictly increasing, last one is the horizon
  double shift = 0.0;  ///< evolve e^{-shift r} rho internally (use lambda0); outputs are unscaled
  bool dense_trace = false;  ///< record every step on [trace_lo, trace_hi]
  double trace_lo = 0.0;
  double trace_hi = 0.0;
  bool check_boundary = true;
  bool smooth_start = false;  ///< replace the first two CN steps by implicit half steps
};

struct HeatKernelTable {
  Grid1D grid;
  double source = 0.0;
  double smoothing_time = 0.0;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> values;  ///< values[c][i] = rho_1(times[c], source, x_i)

  // Dense record over a window of nodes, one row per time step.
  std::vector<double> trace_times;
  std::size_t trace_first = 0;
  std::size_t trace_count = 0;
  std::vector<std::vector<double>> trace;

  // Diagnostics per checkpoint.
  std::vector<double> mass;
  std::vector<double> boundary_ratio;  ///< max(|u| near the ends) / max u

  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  /// Linear in r between checkpoints, linear in z. r must lie in [times.front(), horizon].
  double value(double r, double z) const;
  /// Full-grid profile at time r (linear interpolation between checkpoints).
  std::vector<double> profile(double r) const;
  /// Trace row at a time (linear interpolation between recorded steps).
  std::vector<double> trace_at(double r) const;
  double min_value() const;
};

/// Solves for rho_1(., x0, .). The start u(t0, z) = p0(t0, z - x0) exp(t0 vbar(x0, z)) is the
/// exact free kernel weighted by v averaged over the segment from x0 to z.
/// Throws NumericalError("heatkernel", "boundary contamination ...").
HeatKernelTable solve_density(const PotentialSpec& potential, const GridSpec& grid, double x0,
                              const DensityOptions& options);

/// Independent solves from several sources; OpenMP over sources in parallel mode.
std::vector<HeatKernelTable> solve_density_batch(const PotentialSpec& potential, const GridSpec& grid,
                                                 std::span<const double> sources, const DensityOptions& options,
                                                 Execution exec = Execution::parallel);

/// (2 pi t)^{-d/2} exp(-|y|^2 / (2t)).
double free_kernel(double t, std::span<const double> y, int dimension);
double free_kernel(double t, double y);

enum class RegimeKind { interior, intermediate, exterior };

struct Regime {
  RegimeKind kind = RegimeKind::interior;
  double theta = 0.0;
  double margin = 0.0;
};

Regime classify_regime(double t, std::span<const double> x, std::span<const double> y, double lambda0, double epsilon);

/// e^{lambda0 t} psi(x) psi(y); NumericalError("wrong regime") outside the interior cone.
double interior_asymptotic(const SpectralData& spectral, double t, std::span<const double> x,
                           std::span<const double> y, double epsilon);

struct FirstMoment {
  double value = 0.0;  ///< quadrature of the table over the ball
  double mid = 0.0;  ///< e^{lambda0 t} psi(x0) int_{U_y} psi
  double far = 0.0;  ///< gamma C(u) psi(x0) e^{lambda0 t - sqrt(2 lambda0)|y|} |y|^{(1-d)/2}
};

FirstMoment first_moment(const SpectralData& spectral, const HeatKernelTable& table, double center, double t,
                         double ball_radius = 1.0);

/// m1 for a ball centred at every node of `grid`. Both paths integrate each
/// window independently, so they agree bit for bit.
std::vector<double> ball_mass_profile(const Grid1D& grid, std::span<const double> density, double ball_radius,
                                      Execution exec = Execution::parallel);

struct CrudeBound {
  double c1 = 0.0;
  double calibration_time = 0.0;
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = 0.0;  ///< max ratio / c1 over checked points
};

/// Fits C1 = max over sources and centres |y| <= reach of m1^y(t, x) / (e^{lambda0 t} psi(y))
/// at the calibration time, then counts violations at every later checkpoint.
CrudeBound crude_first_moment_bound(const SpectralData& spectral, std::span<const HeatKernelTable> tables,
                                    double calibration_time, double reach, double ball_radius = 1.0);

/// max |a(t, b.source) - b(t, a.source)| / |a(t, b.source)| over shared checkpoints.
double symmetry_error(const HeatKernelTable& a, const HeatKernelTable& b);

/// Largest ln rho_1 - ln p0 over exterior points (theta >= sqrt(2 lambda0) + margin) of a
/// checkpoint, restricted to where rho_1 is resolved.
double exterior_log_excess(const HeatKernelTable& table, double lambda0, double margin, std::size_t checkpoint);

}  // namespace bbmf
