// SPDX-License-Identifier: Apache-2.0
#include "bbmf/heatkernel.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include "bbmf/propagator.hpp"

namespace bbmf {

namespace {

std::size_t bracket(const std::vector<double>& times, double r, double& weight) {
  // Returns i with times[i] <= r <= times[i+1]; weight is the share of times[i+1].
  if (times.size() == 1) {
    weight = 0.0;
    return 0;
  }
  auto it = std::upper_bound(times.begin(), times.end(), r);
  std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
  if (i + 1 >= times.size()) i = times.size() - 2;
  weight = (r - times[i]) / (times[i + 1] - times[i]);
  return i;
}

void check_time(const HeatKernelTable& t, double r) {
  const double tol = 1e-9 * std::max(1.0, t.horizon());
  if (t.times.empty() || r < t.times.front() - tol || r > t.horizon() + tol) {
    std::ostringstream os;
    os << "horizon exceeded (r = " << r << " outside [" << (t.times.empty() ? 0.0 : t.times.front()) << ", "
       << t.horizon() << "])";
    throw NumericalError("heatkernel", os.str());
  }
}

}  // namespace

double HeatKernelTable::value(double r, double z) const {
  check_time(*this, r);
  double w = 0.0;
  const std::size_t i = bracket(times, r, w);
  const double a = interpolate(grid, values[i], z);
  if (w == 0.0 || times.size() == 1) return a;
  return (1.0 - w) * a + w * interpolate(grid, values[i + 1], z);
}

std::vector<double> HeatKernelTable::profile(double r) const {
  check_time(*this, r);
  double w = 0.0;
  const std::size_t i = bracket(times, r, w);
  std::vector<double> out = values[i];
  if (w != 0.0 && times.size() > 1)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (1.0 - w) * out[j] + w * values[i + 1][j];
  return out;
}

std::vector<double> HeatKernelTable::trace_at(double r) const {
  if (trace.empty()) throw NumericalError("heatkernel", "no dense trace recorded");
  const double tol = 1e-9 * std::max(1.0, trace_times.back());
  if (r < trace_times.front() - tol || r > trace_times.back() + tol) throw NumericalError("heatkernel", "horizon exceeded");
  double w = 0.0;
  const std::size_t i = bracket(trace_times, r, w);
  std::vector<double> out = trace[i];
  if (w > 1e-12 && trace.size() > 1)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = (1.0 - w) * out[j] + w * trace[i + 1][j];
  return out;
}

double HeatKernelTable::min_value() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& row : values)
    for (std::size_t i = 1; i + 1 < row.size(); ++i) m = std::min(m, row[i]);
  return m;
}

double free_kernel(double t, double y) { return std::exp(-y * y / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t); }

double free_kernel(double t, std::span<const double> y, int dimension) {
  double r2 = 0.0;
  for (double c : y) r2 += c * c;
  return std::exp(-r2 / (2.0 * t)) * std::pow(2.0 * std::numbers::pi * t, -0.5 * dimension);
}

constexpr int kStartLayer = 16;

HeatKernelTable solve_density(const PotentialSpec& potential, const GridSpec& gspec, double x0,
                              const DensityOptions& options) {
  if (potential.dimension() != 1) throw NumericalError("heatkernel", "density solver implemented for d = 1 only");
  if (options.checkpoints.empty()) throw NumericalError("heatkernel", "no checkpoints requested");

  HeatKernelTable table;
  table.grid = Grid1D::symmetric(gspec.half_width, gspec.h);
  table.source = x0;
  table.smoothing_time = gspec.smoothing_time();
  table.dt = gspec.dt;
  const Grid1D& g = table.grid;
  const double t0 = table.smoothing_time;
  if (options.checkpoints.front() <= t0) throw NumericalError("heatkernel", "checkpoint before the smoothing time");
  if (std::abs(x0) > g.hi() - 1.0) throw NumericalError("heatkernel", "source outside the grid");

  const auto v = growth_on_grid(potential, g);
  std::vector<double> c(v);
  for (auto& e : c) e -= options.shift;

  // Feynman-Kac weight with v averaged along the straight path x0 -> z, taken at
  // t0 / kStartLayer and carried to t0 with fine steps.
  const double ts = t0 / kStartLayer;
  const double v0 = potential.at_coordinate(x0).v();
  std::vector<double> u(g.size, 0.0), work(g.size);
  for (std::size_t i = 1; i + 1 < g.size; ++i) {
    const double z = g.x(i);
    const double path = std::abs(z - x0) < 1e-12 ? v0 : potential.cell_average(std::min(x0, z), std::max(x0, z)).v();
    u[i] = free_kernel(ts, z - x0) * std::exp(ts * (path - options.shift));
  }
  {
    const CrankNicolson layer(g, c, ts);
    for (int s = 1; s < kStartLayer; ++s) layer.step(u, work);
  }

  std::size_t lo = 0, count = 0;
  if (options.dense_trace) {
    lo = g.nearest(options.trace_lo);
    const std::size_t hi = g.nearest(options.trace_hi);
    count = hi >= lo ? hi - lo + 1 : 0;
    table.trace_first = lo;
    table.trace_count = count;
  }
  auto record_trace = [&](double t) {
    if (!options.dense_trace) return;
    const double scale = std::exp(options.shift * t);
    std::vector<double> row(count);
    for (std::size_t j = 0; j < count; ++j) row[j] = u[lo + j] * scale;
    table.trace_times.push_back(t);
    table.trace.push_back(std::move(row));
  };
  record_trace(t0);

  const std::size_t edge = std::min<std::size_t>(g.size / 4, static_cast<std::size_t>(std::ceil(1.0 / g.h)));
  const CrankNicolson base(g, c, gspec.dt);
  double t = t0;
  bool first = true;
  for (double target : options.checkpoints) {
    if (target <= t + 1e-12) throw NumericalError("heatkernel", "checkpoints must be strictly increasing");
    const double span = target - t;
    const auto steps = static_cast<int>(std::ceil(span / gspec.dt - 1e-9));
    const double dt = span / steps;
    const bool same = std::abs(dt - gspec.dt) <= 1e-9 * gspec.dt;
    std::optional<CrankNicolson> local;
    if (!same) local.emplace(g, c, dt);
    const CrankNicolson& cn = same ? base : *local;
    for (int s = 0; s < steps; ++s) {
      if (first && options.smooth_start && s < 2) {
        cn.implicit_half_step(u);
        cn.implicit_half_step(u);
      } else {
        cn.step(u, work);
      }
      t = (s + 1 == steps) ? target : t + dt;
      record_trace(t);
    }
    first = false;
    t = target;

    const double scale = std::exp(options.shift * target);
    std::vector<double> row(u);
    for (auto& e : row) e *= scale;
    double umax = 0.0, edge_max = 0.0;
    for (std::size_t i = 0; i < g.size; ++i) umax = std::max(umax, std::abs(u[i]));
    for (std::size_t i = 0; i < edge; ++i)
      edge_max = std::max({edge_max, std::abs(u[i]), std::abs(u[g.size - 1 - i])});
    const double ratio = umax > 0.0 ? edge_max / umax : 0.0;
    if (options.check_boundary && ratio > 1e-10) {
      std::ostringstream os;
      os << "boundary contamination at t = " << target << " (edge/max = " << ratio << ")";
      throw NumericalError("heatkernel", os.str());
    }
    table.boundary_ratio.push_back(ratio);
    table.mass.push_back(trapezoid(row, g.h));
    table.times.push_back(target);
    table.values.push_back(std::move(row));
  }
  return table;
}

std::vector<HeatKernelTable> solve_density_batch(const PotentialSpec& potential, const GridSpec& grid,
                                                 std::span<const double> sources, const DensityOptions& options,
                                                 Execution exec) {
  const auto n = static_cast<std::ptrdiff_t>(sources.size());
  std::vector<HeatKernelTable> out(sources.size());
  std::vector<std::exception_ptr> errors(sources.size());
  if (exec == Execution::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = solve_density(potential, grid, sources[i], options);
    return out;
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = solve_density(potential, grid, sources[i], options);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

Regime classify_regime(double t, std::span<const double> x, std::span<const double> y, double lambda0,
                       double epsilon) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) r2 += (y[i] - x[i]) * (y[i] - x[i]);
  Regime out;
  out.theta = std::sqrt(r2) / t;
  out.margin = epsilon;
  const double kappa = std::sqrt(2.0 * lambda0);
  if (out.theta <= kappa - epsilon)
    out.kind = RegimeKind::interior;
  else if (out.theta >= kappa + epsilon)
    out.kind = RegimeKind::exterior;
  else
    out.kind = RegimeKind::intermediate;
  return out;
}

double interior_asymptotic(const SpectralData& spectral, double t, std::span<const double> x,
                           std::span<const double> y, double epsilon) {
  const Regime r = classify_regime(t, x, y, spectral.lambda0, epsilon);
  if (r.kind != RegimeKind::interior) {
    std::ostringstream os;
    os << "wrong regime (theta = " << r.theta << ")";
    throw NumericalError("heatkernel", os.str());
  }
  return std::exp(spectral.lambda0 * t) * spectral.psi_at(x) * spectral.psi_at(y);
}

FirstMoment first_moment(const SpectralData& spectral, const HeatKernelTable& table, double center, double t,
                         double ball_radius) {
  const Grid1D& g = table.grid;
  if (center - ball_radius < g.lo || center + ball_radius > g.hi())
    throw NumericalError("heatkernel", "ball outside grid");
  FirstMoment out;
  const auto rho = table.profile(t);
  out.value = integrate_linear(g, rho, center - ball_radius, center + ball_radius);
  const double x0 = table.source;
  const double psi0 = spectral.psi_at_coordinate(x0);
  out.mid = std::exp(spectral.lambda0 * t) * psi0 * spectral.psi_ball_integral(center, ball_radius);
  const double dir[1] = {center < 0.0 ? -1.0 : 1.0};
  const double gamma = ball_radius == spectral.ball_radius ? spectral.gamma
                                                          : gamma_constant(spectral.lambda0, 1, ball_radius);
  out.far = gamma * spectral.tail_constant_for(dir) * psi0 *
            std::exp(spectral.lambda0 * t - spectral.decay_rate() * std::abs(center));
  return out;
}

std::vector<double> ball_mass_profile(const Grid1D& grid, std::span<const double> density, double ball_radius,
                                      Execution exec) {
  const auto n = static_cast<std::ptrdiff_t>(grid.size);
  std::vector<double> out(grid.size);
  if (exec == Execution::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double y = grid.x(static_cast<std::size_t>(i));
      out[i] = integrate_linear(grid, density, y - ball_radius, y + ball_radius);
    }
    return out;
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double y = grid.x(static_cast<std::size_t>(i));
    out[i] = integrate_linear(grid, density, y - ball_radius, y + ball_radius);
  }
  return out;
}

CrudeBound crude_first_moment_bound(const SpectralData& spectral, std::span<const HeatKernelTable> tables,
                                    double calibration_time, double reach, double ball_radius) {
  CrudeBound out;
  out.calibration_time = calibration_time;
  const double l0 = spectral.lambda0;
  auto ratios = [&](const HeatKernelTable& tab, std::size_t c, auto&& visit) {
    const auto m = ball_mass_profile(tab.grid, tab.values[c], ball_radius);
    for (std::size_t i = 0; i < tab.grid.size; ++i) {
      const double y = tab.grid.x(i);
      if (std::abs(y) > reach) continue;
      visit(m[i] / (std::exp(l0 * tab.times[c]) * spectral.psi_at_coordinate(y)));
    }
  };
  for (const auto& tab : tables) {
    auto it = std::find_if(tab.times.begin(), tab.times.end(),
                           [&](double t) { return std::abs(t - calibration_time) < 1e-9; });
    if (it == tab.times.end()) throw NumericalError("heatkernel", "calibration time is not a checkpoint");
    ratios(tab, static_cast<std::size_t>(it - tab.times.begin()), [&](double r) { out.c1 = std::max(out.c1, r); });
  }
  for (const auto& tab : tables)
    for (std::size_t c = 0; c < tab.times.size(); ++c) {
      if (tab.times[c] <= calibration_time + 1e-9) continue;
      ratios(tab, c, [&](double r) {
        ++out.checked;
        out.worst = std::max(out.worst, r / out.c1);
        if (r > out.c1 * (1.0 + 1e-12)) ++out.violations;
      });
    }
  return out;
}

double symmetry_error(const HeatKernelTable& a, const HeatKernelTable& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.times.size(); ++i)
    for (std::size_t j = 0; j < b.times.size(); ++j) {
      if (std::abs(a.times[i] - b.times[j]) > 1e-9) continue;
      const double ab = interpolate(a.grid, a.values[i], b.source);
      const double ba = interpolate(b.grid, b.values[j], a.source);
      worst = std::max(worst, std::abs(ab - ba) / std::abs(ab));
    }
  return worst;
}

double exterior_log_excess(const HeatKernelTable& table, double lambda0, double margin, std::size_t checkpoint) {
  const double t = table.times.at(checkpoint);
  const double kappa = std::sqrt(2.0 * lambda0);
  const auto& row = table.values[checkpoint];
  const Grid1D& g = table.grid;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < g.size; ++i) {
    const double z = g.x(i);
    if (std::abs(z) > g.hi() - 2.0) continue;
    const double dz = z - table.source;
    if (std::abs(dz) / t < kappa + margin) continue;
    if (!(row[i] > 1e-250)) continue;
    worst = std::max(worst, std::log(row[i]) - (-dz * dz / (2.0 * t) - 0.5 * std::log(2.0 * std::numbers::pi * t)));
  }
  return worst;
}

}  // namespace bbmf
