// SPDX-License-Identifier: Apache-2.0
#include "bbmf/moments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <sstream>

#include "bbmf/propagator.hpp"

namespace bbmf {

namespace {

using boost::multiprecision::cpp_int;

struct Discounted {
  std::vector<std::vector<double>> integral;  // one per rate
  double sup = 0.0;  // sup of w over the watched nodes
};

/// Evolves w from `w` under `cn` for `steps` steps (the first two replaced by
/// implicit half steps) and accumulates int_0^R e^{-c_j r} w(r) dr per rate by
/// the trapezoid rule on the step nodes.
Discounted discounted_integrals(const CrankNicolson& cn, std::vector<double> w, std::span<const double> rates,
                                int steps, std::size_t watch_lo, std::size_t watch_hi) {
  const std::size_t n = w.size();
  Discounted out;
  out.integral.assign(rates.size(), std::vector<double>(n, 0.0));
  auto watch = [&] {
    for (std::size_t i = watch_lo; i <= watch_hi && i < n; ++i) out.sup = std::max(out.sup, w[i]);
  };
  watch();
  std::vector<double> prev(w), work(n);
  std::vector<double> e_prev(rates.size(), 1.0), e_new(rates.size());
  double t = 0.0;
  auto accumulate = [&](double t_new) {
    const double half = 0.5 * (t_new - t);
    for (std::size_t j = 0; j < rates.size(); ++j) {
      e_new[j] = std::exp(-rates[j] * t_new);
      auto& acc = out.integral[j];
      const double a = half * e_prev[j], b = half * e_new[j];
      for (std::size_t i = 0; i < n; ++i) acc[i] += a * prev[i] + b * w[i];
      e_prev[j] = e_new[j];
    }
    t = t_new;
    prev = w;
    watch();
  };
  const double dt = cn.dt();
  for (int s = 0; s < steps; ++s) {
    if (s < 2) {
      cn.implicit_half_step(w);
      accumulate(t + 0.5 * dt);
      cn.implicit_half_step(w);
      accumulate(static_cast<double>(s + 1) * dt);
    } else {
      cn.step(w, work);
      accumulate(static_cast<double>(s + 1) * dt);
    }
  }
  return out;
}

double resolve_r_max(const SpectralData& spectral, const GridSpec& grid, const MomentOptions& options) {
  if (options.r_max > 0.0) return options.r_max;
  if (grid.r_max > 0.0) return grid.r_max;
  return 25.0 / spectral.lambda0;
}

std::pair<std::size_t, std::size_t> node_range(const Grid1D& g, double lo, double hi) {
  std::size_t a = g.size, b = 0;
  for (std::size_t i = 0; i < g.size; ++i) {
    const double x = g.x(i);
    if (x >= lo - 1e-9 && x <= hi + 1e-9) {
      a = std::min(a, i);
      b = std::max(b, i);
    }
  }
  if (a > b) {
    a = g.nearest(0.5 * (lo + hi));
    b = a;
  }
  return {a, b};
}

/// Marches the forward moment system; calls `visit(step, s, m)` after every full step.
void march_moments(const PotentialSpec& potential, const GridSpec& gspec, double center, double ball_radius,
                   double horizon, int k_max,
                   const std::function<void(int, double, const std::vector<std::vector<double>>&)>& visit) {
  const Grid1D g = Grid1D::symmetric(gspec.half_width, gspec.h);
  if (center - ball_radius < g.lo + 1.0 || center + ball_radius > g.hi() - 1.0)
    throw NumericalError("moments", "ball outside grid");
  const auto alpha = alpha_on_grid(potential, g);
  const CrankNicolson cn(g, growth_on_grid(potential, g), gspec.dt);
  const auto steps = static_cast<int>(std::llround(horizon / gspec.dt));
  if (std::abs(steps * gspec.dt - horizon) > 1e-9 * std::max(1.0, horizon))
    throw NumericalError("moments", "time not aligned with the step");

  const std::size_t n = g.size;
  std::vector<std::vector<double>> m(k_max, std::vector<double>(n, 0.0));
  // Cell average of the ball indicator keeps the start second order.
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double x = g.x(i);
    const double lo = std::max(x - 0.5 * g.h, center - ball_radius);
    const double hi = std::min(x + 0.5 * g.h, center + ball_radius);
    m[0][i] = std::max(0.0, hi - lo) / g.h;
  }
  auto source = [&](int k, std::vector<double>& s) {
    std::fill(s.begin(), s.end(), 0.0);
    for (int i = 1; i < k; ++i) {
      const double c = binomial(k, i);
      const auto& a = m[i - 1];
      const auto& b = m[k - i - 1];
      for (std::size_t j = 0; j < n; ++j)
        if (alpha[j] != 0.0) s[j] += c * alpha[j] * a[j] * b[j];
    }
  };
  std::vector<std::vector<double>> s_old(k_max, std::vector<double>(n, 0.0)), s_new = s_old;
  std::vector<double> work(n);
  visit(0, 0.0, m);
  for (int step = 0; step < steps; ++step) {
    if (step < 2) {
      for (int half = 0; half < 2; ++half)
        for (int k = 1; k <= k_max; ++k) {
          if (k >= 2) source(k, s_new[k - 1]);
          if (k == 1)
            cn.implicit_half_step(m[0]);
          else
            cn.implicit_half_step(m[k - 1], s_new[k - 1]);
        }
    } else {
      for (int k = 1; k <= k_max; ++k) {
        if (k == 1) {
          cn.step(m[0], work);
          continue;
        }
        source(k, s_new[k - 1]);
        cn.step(m[k - 1], s_old[k - 1], s_new[k - 1], work);
        s_old[k - 1].swap(s_new[k - 1]);
      }
    }
    // Sources at the new time level for the next trapezoid step.
    if (step < 2)
      for (int k = 2; k <= k_max; ++k) source(k, s_old[k - 1]);
    visit(step + 1, (step + 1) * gspec.dt, m);
  }
}

}  // namespace

StirlingTable::StirlingTable(int k_max) : k_max_(k_max) {
  if (k_max < 1) throw std::invalid_argument("stirling: k_max must be >= 1");
  s_.assign(k_max + 1, std::vector<cpp_int>(k_max + 1, 0));
  s_[0][0] = 1;
  for (int k = 1; k <= k_max; ++k)
    for (int j = 1; j <= k; ++j) s_[k][j] = cpp_int(j) * s_[k - 1][j] + s_[k - 1][j - 1];
}

const cpp_int& StirlingTable::exact(int k, int j) const { return s_.at(k).at(j); }

double StirlingTable::operator()(int k, int j) const { return s_.at(k).at(j).convert_to<double>(); }

StirlingTable stirling(int k_max) { return StirlingTable(k_max); }

double MomentTable::G_at(int k, double x) const { return interpolate(grid, G.at(k - 1), x); }

double MomentTable::f(int k, double x) const {
  if (k == 1) return 1.0;
  return G_at(k, x) / std::pow(G_at(1, x), k);
}

std::vector<double> recursion_source(const MomentTable& table, std::span<const double> alpha, int k) {
  std::vector<double> g(table.grid.size, 0.0);
  for (int i = 1; i < k; ++i) {
    const double c = binomial(k, i);
    const auto& a = table.G[i - 1];
    const auto& b = table.G[k - i - 1];
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += c * alpha[j] * a[j] * b[j];
  }
  return g;
}

MomentTable compute_Gk(const SpectralData& spectral, const PotentialSpec& potential, const GridSpec& gspec, int k_max,
                       double x0, const MomentOptions& options) {
  if (spectral.radial) throw NumericalError("moments", "G_k recursion implemented for d = 1 only");
  if (k_max < 1) throw ConfigError("k_max", "K_max must be >= 1");
  MomentTable out;
  out.grid = spectral.grid;
  out.k_max = k_max;
  out.lambda0 = spectral.lambda0;
  out.x0 = x0;
  out.r_max = resolve_r_max(spectral, gspec, options);
  const double base_dt = options.dt > 0.0 ? options.dt : gspec.dt;
  const auto steps = static_cast<int>(std::ceil(out.r_max / base_dt - 1e-9));
  out.dt = out.r_max / steps;
  out.G.push_back(spectral.psi);
  out.tails.resize(k_max);

  const auto alpha = alpha_on_grid(potential, out.grid);
  std::vector<double> c = growth_on_grid(potential, out.grid);
  for (auto& e : c) e -= spectral.lambda0;
  const CrankNicolson cn(out.grid, c, out.dt);
  const auto& psi = spectral.psi;
  const double l0 = spectral.lambda0;

  for (int k = 2; k <= k_max; ++k) {
    auto g = recursion_source(out, alpha, k);
    std::vector<double> pg(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] = psi[i] * g[i];
    const double overlap = trapezoid(pg, out.grid.h);
    const double rate[1] = {(k - 1) * l0};
    auto acc = discounted_integrals(cn, std::move(g), rate, steps, 0, 0);
    std::vector<double> G = std::move(acc.integral[0]);
    const double tail_factor = std::exp(-(k - 1) * l0 * out.r_max) / ((k - 1) * l0) * overlap;
    TailRecord rec;
    rec.overlap = overlap;
    rec.truncated = interpolate(out.grid, G, x0);
    rec.tail = interpolate(out.grid, psi, x0) * tail_factor;
    if (rec.tail > 0.1 * rec.truncated) {
      std::ostringstream os;
      os << "tail not negligible for k = " << k << " (tail " << rec.tail << " vs truncated " << rec.truncated
         << "); increase r_max";
      throw NumericalError("moments", os.str());
    }
    for (std::size_t i = 0; i < G.size(); ++i) G[i] += psi[i] * tail_factor;
    out.tails[k - 1] = rec;
    out.G.push_back(std::move(G));
  }
  return out;
}

std::vector<double> limit_moments_interior(const MomentTable& table, double x0) {
  std::vector<double> f(table.k_max);
  for (int k = 1; k <= table.k_max; ++k) f[k - 1] = table.f(k, x0);
  return f;
}

double front_scale(const SpectralData& spectral, std::span<const double> direction, double b) {
  const int d = spectral.dimension;
  return spectral.gamma * spectral.tail_constant_for(direction) * std::pow(0.5 * spectral.lambda0, 0.25 * (1 - d)) *
         std::exp(spectral.decay_rate() * b);
}

std::vector<double> limit_moments_front(const MomentTable& table, const SpectralData& spectral, double b,
                                        std::span<const double> direction, double x0) {
  const StirlingTable s(table.k_max);
  const double q = front_scale(spectral, direction, b);
  const double psi0 = table.G_at(1, x0);
  std::vector<double> out(table.k_max);
  for (int k = 1; k <= table.k_max; ++k) {
    double sum = 0.0;
    for (int j = 1; j <= k; ++j) sum += s(k, j) * (table.G_at(j, x0) / std::pow(psi0, j)) * std::pow(psi0 * q, j - k);
    out[k - 1] = sum;
  }
  return out;
}

std::vector<std::vector<std::vector<double>>> forward_moments(const PotentialSpec& potential, const GridSpec& grid,
                                                              double center, double ball_radius,
                                                              std::span<const double> times, int k_max) {
  std::vector<std::vector<std::vector<double>>> out;
  if (times.empty()) return out;
  std::vector<long long> want;
  for (double t : times) {
    const auto n = std::llround(t / grid.dt);
    if (std::abs(n * grid.dt - t) > 1e-9 * std::max(1.0, t)) throw NumericalError("moments", "time not aligned with the step");
    want.push_back(n);
  }
  out.resize(times.size());
  march_moments(potential, grid, center, ball_radius, *std::max_element(times.begin(), times.end()), k_max,
                [&](int step, double, const std::vector<std::vector<double>>& m) {
                  for (std::size_t j = 0; j < want.size(); ++j)
                    if (want[j] == step) out[j] = m;
                });
  return out;
}

FiniteTimeMoments finite_time_mk(const HeatKernelTable& kernel, const SpectralData& spectral,
                                 const PotentialSpec& potential, const GridSpec& grid, double center, double t,
                                 int k_max, double ball_radius) {
  if (t > kernel.horizon() + 1e-9) throw NumericalError("moments", "horizon exceeded");
  if (kernel.trace.empty()) throw NumericalError("moments", "kernel table has no dense trace over the support");
  const Grid1D& g = kernel.grid;
  const std::size_t lo = kernel.trace_first, count = kernel.trace_count;
  if (g.x(lo) > potential.alpha_lo() || g.x(lo + count - 1) < potential.alpha_hi())
    throw NumericalError("moments", "dense trace does not cover the support of alpha");

  FiniteTimeMoments out;
  out.t = t;
  out.center = center;
  out.m.assign(k_max, 0.0);
  out.forward.assign(k_max, 0.0);
  out.m[0] = first_moment(spectral, kernel, center, t, ball_radius).value;

  const auto alpha_full = alpha_on_grid(potential, g);
  std::vector<double> alpha(alpha_full.begin() + lo, alpha_full.begin() + lo + count);
  const auto steps = std::llround(t / grid.dt);
  // window[k-1][step][j] = m_k(step dt, z_j) on the trace window.
  std::vector<std::vector<std::vector<double>>> window(k_max);
  const double x0 = kernel.source;
  march_moments(potential, grid, center, ball_radius, t, k_max,
                [&](int step, double, const std::vector<std::vector<double>>& m) {
                  for (int k = 1; k <= k_max; ++k)
                    window[k - 1].emplace_back(m[k - 1].begin() + lo, m[k - 1].begin() + lo + count);
                  if (step == steps)
                    for (int k = 1; k <= k_max; ++k) out.forward[k - 1] = interpolate(g, m[k - 1], x0);
                });

  const double h = g.h;
  const double t0 = kernel.smoothing_time;
  const Grid1D wgrid{g.x(lo), h, count};
  auto F = [&](int k, double s, std::vector<double>& f) {
    // F_k(s, .) on the window, linear between steps.
    const double pos = s / grid.dt;
    auto j = static_cast<long long>(std::floor(pos + 1e-9));
    j = std::clamp<long long>(j, 0, steps);
    const double w = std::clamp(pos - static_cast<double>(j), 0.0, 1.0);
    const auto j1 = std::min<long long>(j + 1, steps);
    f.assign(count, 0.0);
    for (int i = 1; i < k; ++i) {
      const double c = binomial(k, i);
      const auto& a0 = window[i - 1][j];
      const auto& a1 = window[i - 1][j1];
      const auto& b0 = window[k - i - 1][j];
      const auto& b1 = window[k - i - 1][j1];
      for (std::size_t z = 0; z < count; ++z) {
        const double a = (1 - w) * a0[z] + w * a1[z];
        const double b = (1 - w) * b0[z] + w * b1[z];
        f[z] += c * alpha[z] * a * b;
      }
    }
  };

  std::vector<double> f, prod(count);
  for (int k = 2; k <= k_max; ++k) {
    double total = 0.0, prev_val = 0.0, prev_r = 0.0;
    bool have = false;
    for (std::size_t n = 0; n < kernel.trace_times.size(); ++n) {
      const double r = kernel.trace_times[n];
      if (r > t + 1e-9) break;
      F(k, std::max(0.0, t - r), f);
      for (std::size_t z = 0; z < count; ++z) prod[z] = kernel.trace[n][z] * f[z];
      const double val = trapezoid(prod, h);
      if (have) total += 0.5 * (r - prev_r) * (prev_val + val);
      prev_val = val;
      prev_r = r;
      have = true;
    }
    if (prev_r < t - 1e-6) throw NumericalError("moments", "horizon exceeded (dense trace ends before t)");
    // [0, t0]: the kernel is still concentrated at x0.
    F(k, t, f);
    const double near_t = interpolate(wgrid, f, x0);
    F(k, std::max(0.0, t - t0), f);
    const double near_t0 = interpolate(wgrid, f, x0);
    total += 0.5 * t0 * (near_t + near_t0);
    out.m[k - 1] = total;
  }
  return out;
}

double kth_moment_count(std::span<const double> m, int k) {
  const StirlingTable s(k);
  double sum = 0.0;
  for (int i = 1; i <= k; ++i) sum += s(k, i) * m[i - 1];
  return sum;
}

std::vector<double> normalized_moments(std::span<const double> m) {
  std::vector<double> out(m.size());
  for (std::size_t k = 1; k <= m.size(); ++k)
    out[k - 1] = kth_moment_count(m, static_cast<int>(k)) / std::pow(m[0], static_cast<double>(k));
  return out;
}

SemigroupIntegrals semigroup_integrals(const SpectralData& spectral, const PotentialSpec& potential,
                                       const GridSpec& gspec, int k_max, double gamma_lo, double gamma_hi,
                                       const MomentOptions& options) {
  if (spectral.radial) throw NumericalError("moments", "semigroup integrals implemented for d = 1 only");
  SemigroupIntegrals out;
  out.tn_norm.assign(std::max(k_max, 1), 0.0);
  if (k_max < 2) return out;
  const Grid1D& g = spectral.grid;
  const double r_max = resolve_r_max(spectral, gspec, options);
  const double base_dt = options.dt > 0.0 ? options.dt : gspec.dt;
  const auto steps = static_cast<int>(std::ceil(r_max / base_dt - 1e-9));
  const double dt = r_max / steps;
  const double l0 = spectral.lambda0;

  auto alpha = alpha_on_grid(potential, g);
  std::vector<double> c = growth_on_grid(potential, g);
  for (auto& e : c) e -= l0;
  const CrankNicolson cn(g, c, dt);
  std::vector<double> rates;
  for (int n = 2; n <= k_max; ++n) rates.push_back((n - 1) * l0);
  std::vector<double> pa(g.size);
  for (std::size_t i = 0; i < g.size; ++i) pa[i] = spectral.psi[i] * alpha[i];
  const double overlap = trapezoid(pa, g.h);
  const auto [ilo, ihi] = node_range(g, gamma_lo, gamma_hi);
  auto acc = discounted_integrals(cn, alpha, rates, steps, ilo, ihi);
  out.a = acc.sup;
  for (int n = 2; n <= k_max; ++n) {
    const double tail = std::exp(-(n - 1) * l0 * r_max) / ((n - 1) * l0) * overlap;
    double sup = 0.0;
    for (std::size_t i = ilo; i <= ihi; ++i) sup = std::max(sup, acc.integral[n - 2][i] + spectral.psi[i] * tail);
    out.tn_norm[n - 1] = sup;
  }
  return out;
}

std::vector<double> crude_constants(double c1, const SemigroupIntegrals& integrals, int k_max) {
  std::vector<double> c(k_max, 0.0);
  c[0] = c1;
  for (int k = 2; k <= k_max; ++k) {
    double sum = 0.0;
    for (int i = 1; i < k; ++i) sum += binomial(k, i) * c[i - 1] * c[k - i - 1];
    c[k - 1] = sum * integrals.tn_norm.at(k - 1);
  }
  return c;
}

CarlemanReport carleman_diagnostics(const MomentTable& table, const SemigroupIntegrals& integrals, double gamma_lo,
                                    double gamma_hi) {
  CarlemanReport out;
  const int K = table.k_max;
  out.a = integrals.a;
  out.operator_A = std::max(2.0, 2.0 * integrals.a / table.lambda0);
  const auto [ilo, ihi] = node_range(table.grid, gamma_lo, gamma_hi);
  out.sup_f.assign(K, 0.0);
  for (int n = 1; n <= K; ++n)
    for (std::size_t i = ilo; i <= ihi; ++i)
      out.sup_f[n - 1] = std::max(out.sup_f[n - 1], n == 1 ? table.G[0][i] / table.G[0][i]
                                                           : table.G[n - 1][i] / std::pow(table.G[0][i], n));
  out.A = K >= 2 ? std::max(out.operator_A, out.sup_f[1]) : out.operator_A;
  out.f2_within_operator_bound = K < 2 || out.sup_f[1] <= out.operator_A;
  double partial = 0.0, factorial = 1.0;
  for (int n = 1; n <= K; ++n) {
    factorial *= n;
    const double bound = std::pow(out.A, 2 * n - 1) * factorial;
    out.bound.push_back(bound);
    out.ratio.push_back(out.sup_f[n - 1] / bound);
    if (out.sup_f[n - 1] > bound) out.violated = true;
    partial += std::pow(1.0 / table.f(n, table.x0), 1.0 / (2.0 * n));
    out.partial_sums.push_back(partial);
  }
  return out;
}

CrudeScan crude_bound_scan(const SpectralData& spectral, const PotentialSpec& potential, const GridSpec& grid,
                           std::span<const double> centers, std::span<const double> times,
                           std::span<const double> constants, double x0, double ball_radius, Execution exec) {
  const int K = static_cast<int>(constants.size());
  const auto n = static_cast<std::ptrdiff_t>(centers.size());
  std::vector<CrudeScan> parts(centers.size());
  std::vector<std::exception_ptr> errors(centers.size());
  auto one = [&](std::ptrdiff_t c) {
    const double y = centers[c];
    const auto m = forward_moments(potential, grid, y, ball_radius, times, K);
    const double psi_y = spectral.psi_at_coordinate(y);
    CrudeScan& p = parts[c];
    for (std::size_t j = 0; j < times.size(); ++j)
      for (int k = 1; k <= K; ++k) {
        const double value = interpolate(spectral.grid, m[j][k - 1], x0);
        const double bound = constants[k - 1] * std::exp(k * spectral.lambda0 * times[j]) * std::pow(psi_y, k);
        ++p.checked;
        p.worst = std::max(p.worst, value / bound);
        if (value > bound) ++p.violations;
      }
  };
  if (exec == Execution::serial) {
    for (std::ptrdiff_t c = 0; c < n; ++c) one(c);
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < n; ++c) {
      try {
        one(c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  CrudeScan out;
  for (const auto& p : parts) {
    out.checked += p.checked;
    out.violations += p.violations;
    out.worst = std::max(out.worst, p.worst);
  }
  return out;
}

}  // namespace bbmf
