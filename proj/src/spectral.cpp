// SPDX-License-Identifier: Apache-2.0
#include "bbmf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "bbmf/propagator.hpp"

namespace bbmf {

namespace {

double unit_sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / boost::math::tgamma(0.5 * d);
}

double unit_ball_volume(int d) { return std::pow(std::numbers::pi, 0.5 * d) / boost::math::tgamma(0.5 * d + 1.0); }

/// Symmetric tridiagonal operator: diag[i], off[i] couples i and i+1.
struct SymTridiagonal {
  std::vector<double> diag;
  std::vector<double> off;

  void apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t n = diag.size();
    for (std::size_t i = 0; i < n; ++i) {
      double s = diag[i] * x[i];
      if (i > 0) s += off[i - 1] * x[i - 1];
      if (i + 1 < n) s += off[i] * x[i + 1];
      y[i] = s;
    }
  }

  TridiagonalLU shifted_inverse(double sigma) const {
    std::vector<double> d(diag.size()), o(off.size());
    for (std::size_t i = 0; i < diag.size(); ++i) d[i] = sigma - diag[i];
    for (std::size_t i = 0; i < off.size(); ++i) o[i] = -off[i];
    return TridiagonalLU(o, d, o);
  }
};

double norm2(std::span<const double> x) { return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0)); }

struct TopPair {
  double value = 0.0;
  std::vector<double> vector;
  double residual = 0.0;
  int iterations = 0;
};

/// Largest eigenpair of a symmetric tridiagonal matrix whose eigenvalues are
/// all below `upper`. Fixed-shift inverse iteration, then shifts that track
/// the Rayleigh quotient from above (mu + 2||r|| bounds the top eigenvalue).
TopPair top_eigenpair(const SymTridiagonal& a, double upper, std::vector<double> start, int max_iter, double tol) {
  const std::size_t n = a.diag.size();
  std::vector<double> x = std::move(start), ax(n);
  double nx = norm2(x);
  for (auto& v : x) v /= nx;
  double sigma = upper + 0.05 * std::max(1.0, std::abs(upper));
  TridiagonalLU lu = a.shifted_inverse(sigma);
  TopPair out;
  const double scale = std::max(1.0, std::abs(upper));
  for (int it = 1; it <= max_iter; ++it) {
    lu.solve(x);
    nx = norm2(x);
    for (auto& v : x) v /= nx;
    a.apply(x, ax);
    const double mu = std::inner_product(x.begin(), x.end(), ax.begin(), 0.0);
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) r2 += (ax[i] - mu * x[i]) * (ax[i] - mu * x[i]);
    const double r = std::sqrt(r2);
    out = {mu, x, r, it};
    if (r <= tol * scale) break;
    // Tighten the shift once the iterate is clearly dominated by the top mode.
    const double candidate = mu + std::max(2.0 * r, 1e-10 * scale);
    if (r < 1e-3 * scale && candidate < sigma) {
      sigma = candidate;
      lu = a.shifted_inverse(sigma);
    }
  }
  return out;
}

}  // namespace

double SpectralData::decay_rate() const { return std::sqrt(2.0 * lambda0); }

double SpectralData::tail_constant_for(std::span<const double> direction) const {
  if (tail.constants.empty()) return 0.0;
  if (radial || tail.constants.size() == 1) return tail.constants.front();
  return direction[0] < 0.0 ? tail.constants[0] : tail.constants[1];
}

double SpectralData::psi_at_coordinate(double s) const {
  const double kappa = decay_rate();
  if (!radial) {
    if (s >= grid.lo && s <= grid.hi()) return interpolate(grid, psi, s);
    const double c = tail.constants.empty() ? 0.0 : (s < 0 ? tail.constants[0] : tail.constants[1]);
    return c * std::exp(-kappa * std::abs(s));
  }
  const double r = std::abs(s);
  if (r <= grid.lo) return psi.front();
  if (r <= grid.hi()) return interpolate(grid, psi, r);
  const double c = tail.constants.empty() ? 0.0 : tail.constants.front();
  return c * std::pow(r, 0.5 * (1 - dimension)) * std::exp(-kappa * r);
}

double SpectralData::psi_at(std::span<const double> x) const {
  if (!radial) return psi_at_coordinate(x[0]);
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  return psi_at_coordinate(std::sqrt(r2));
}

double SpectralData::psi_ball_integral(double center, double radius) const {
  if (radial) throw NumericalError("spectral", "ball integral implemented for d = 1 only");
  const double a = center - radius, b = center + radius;
  double total = integrate_linear(grid, psi, a, b);
  const double kappa = decay_rate();
  // Analytic tail pieces outside the grid.
  if (b > grid.hi() && !tail.constants.empty()) {
    const double lo = std::max(a, grid.hi());
    total += tail.constants[1] * (std::exp(-kappa * lo) - std::exp(-kappa * b)) / kappa;
  }
  if (a < grid.lo && !tail.constants.empty()) {
    const double hi = std::min(b, grid.lo);
    total += tail.constants[0] * (std::exp(kappa * hi) - std::exp(kappa * a)) / kappa;
  }
  return total;
}

SpectralData principal_eigenpair(const PotentialSpec& potential, const GridSpec& gspec,
                                 const SpectralOptions& options) {
  SpectralData out;
  out.dimension = potential.dimension();
  out.radial = out.dimension >= 2;
  out.ball_radius = options.ball_radius;

  SymTridiagonal a;
  std::vector<double> weights;  // psi = W^{-1/2} x in the radial case
  double v_max = -std::numeric_limits<double>::infinity();
  const double h = gspec.h;

  if (!out.radial) {
    out.grid = Grid1D::symmetric(gspec.half_width, h);
    const auto v = growth_on_grid(potential, out.grid);
    const std::size_t m = out.grid.size - 2;
    a.diag.resize(m);
    a.off.assign(m - 1, 0.5 / (h * h));
    for (std::size_t i = 0; i < m; ++i) {
      a.diag[i] = -1.0 / (h * h) + v[i + 1];
      v_max = std::max(v_max, v[i + 1]);
    }
  } else {
    const int d = out.dimension;
    const auto n = static_cast<std::size_t>(std::ceil(gspec.half_width / h - 1e-9));
    out.grid = Grid1D{0.5 * h, h, n};
    std::vector<double> face(n + 1), w(n);
    for (std::size_t i = 0; i <= n; ++i) face[i] = std::pow(static_cast<double>(i) * h, d - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double r0 = static_cast<double>(i) * h, r1 = r0 + h;
      w[i] = (std::pow(r1, d) - std::pow(r0, d)) / (d * h);
    }
    a.diag.resize(n);
    a.off.resize(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = out.grid.x(i);
      const double v = potential.cell_average(r - 0.5 * h, r + 0.5 * h).v();
      v_max = std::max(v_max, v);
      // Outer face of the last cell carries the Dirichlet ghost (zero beyond M).
      a.diag[i] = -(face[i] + face[i + 1]) / (2.0 * w[i] * h * h) + v;
      if (i + 1 < n) a.off[i] = face[i + 1] / (2.0 * h * h * std::sqrt(w[i] * w[i + 1]));
    }
    weights = w;
  }

  if (!(v_max > 0.0)) throw NumericalError("spectral", "subcritical potential (sup v <= 0)");

  const std::size_t m = a.diag.size();
  std::vector<double> start(m, 1.0);
  auto top = top_eigenpair(a, v_max, std::move(start), options.max_iterations, options.tolerance);
  if (!(top.value > 0.0)) {
    std::ostringstream os;
    os << "subcritical potential (top eigenvalue " << top.value << " <= 0)";
    throw NumericalError("spectral", os.str());
  }
  if (top.residual > 1e-8 * std::max(1.0, std::abs(v_max))) throw NumericalError("spectral", "not converged");

  out.lambda0 = top.value;
  out.iterations = top.iterations;
  out.residual = top.residual;

  if (!out.radial) {
    out.psi.assign(out.grid.size, 0.0);
    for (std::size_t i = 0; i < m; ++i) out.psi[i + 1] = top.vector[i];
    std::vector<double> sq(out.psi.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = out.psi[i] * out.psi[i];
    const double norm_sq = trapezoid(sq, h);
    const double sign = out.psi[out.grid.size / 2] < 0.0 ? -1.0 : 1.0;
    for (auto& p : out.psi) p *= sign / std::sqrt(norm_sq);
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = out.psi[i] * out.psi[i];
    out.norm = std::sqrt(trapezoid(sq, h));
    // Residual on the full-length vector.
    CrankNicolson op(out.grid, growth_on_grid(potential, out.grid), 1.0);
    std::vector<double> lpsi(out.grid.size);
    op.apply(out.psi, lpsi);
    double r2 = 0.0, p2 = 0.0;
    for (std::size_t i = 1; i + 1 < out.grid.size; ++i) {
      r2 += (lpsi[i] - out.lambda0 * out.psi[i]) * (lpsi[i] - out.lambda0 * out.psi[i]);
      p2 += out.psi[i] * out.psi[i];
    }
    out.residual = std::sqrt(r2 / p2);
  } else {
    out.psi.resize(m);
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      out.psi[i] = top.vector[i] / std::sqrt(weights[i]);
      norm_sq += out.psi[i] * out.psi[i] * weights[i] * h;
    }
    norm_sq *= unit_sphere_area(out.dimension);
    const double sign = out.psi[0] < 0.0 ? -1.0 : 1.0;
    for (auto& p : out.psi) p *= sign / std::sqrt(norm_sq);
    double check = 0.0;
    for (std::size_t i = 0; i < m; ++i) check += out.psi[i] * out.psi[i] * weights[i] * h;
    out.norm = std::sqrt(check * unit_sphere_area(out.dimension));
  }

  for (std::size_t i = 1; i + 1 < out.psi.size(); ++i)
    if (!(out.psi[i] > 0.0)) throw NumericalError("spectral", "ground state not positive on the grid");

  const double L = potential.support_radius();
  const double lo = options.fit_lo > 0.0 ? options.fit_lo : L + 3.0;
  const double hi = options.fit_hi > 0.0 ? options.fit_hi : L + 6.0;
  out.tail = tail_constant(out, lo, hi);
  out.gamma = gamma_constant(out.lambda0, out.dimension, options.ball_radius);
  return out;
}

double square_well_oracle(double alpha0, double half_width) {
  auto f = [&](double lambda) {
    const double k = std::sqrt(2.0 * (alpha0 - lambda));
    return k * std::tan(k * half_width) - std::sqrt(2.0 * lambda);
  };
  // Ground state: k L in (0, pi/2).
  const double kmax = std::numbers::pi / (2.0 * half_width);
  double lo = std::max(0.0, alpha0 - 0.5 * kmax * kmax);
  double hi = alpha0;
  if (lo > 0.0) lo = std::nextafter(lo, hi);
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, alpha0)) break;
  }
  return 0.5 * (lo + hi);
}

TailFit tail_constant(const SpectralData& s, double r1, double r2) {
  if (!(r2 > r1)) throw NumericalError("tail_constant", "window too narrow");
  const double kappa = s.decay_rate();
  const double reach = s.radial ? s.grid.hi() : s.grid.hi();
  if (r2 > reach - 3.0) throw NumericalError("tail_constant", "tail not resolved (window reaches the boundary)");
  const double pmax = *std::max_element(s.psi.begin(), s.psi.end());

  TailFit fit;
  fit.window_lo = r1;
  fit.window_hi = r2;
  const std::vector<int> signs = s.radial ? std::vector<int>{1} : std::vector<int>{-1, 1};
  for (int sign : signs) {
    std::vector<double> rs, ys, lps;
    for (std::size_t i = 0; i < s.grid.size; ++i) {
      const double x = s.grid.x(i);
      const double r = s.radial ? x : sign * x;
      if (r < r1 - 1e-12 || r > r2 + 1e-12) continue;
      const double p = s.psi[i];
      if (!(p > 1e-12 * pmax)) throw NumericalError("tail_constant", "tail not resolved (psi below noise floor)");
      const double lp = std::log(p);
      rs.push_back(r);
      lps.push_back(lp);
      ys.push_back(lp + 0.5 * (s.dimension - 1) * std::log(r) + kappa * r);
    }
    if (rs.size() < 3) throw NumericalError("tail_constant", "window too narrow");
    const double n = static_cast<double>(rs.size());
    const double rbar = std::accumulate(rs.begin(), rs.end(), 0.0) / n;
    const double ybar = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    const double lbar = std::accumulate(lps.begin(), lps.end(), 0.0) / n;
    double srr = 0.0, sry = 0.0, srl = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      srr += (rs[i] - rbar) * (rs[i] - rbar);
      sry += (rs[i] - rbar) * (ys[i] - ybar);
      srl += (rs[i] - rbar) * (lps[i] - lbar);
    }
    fit.constants.push_back(std::exp(ybar));
    fit.residual_slopes.push_back(sry / srr);
    fit.decay_rates.push_back(srl / srr);
  }
  return fit;
}

double gamma_constant(double lambda0, int dimension, double radius) {
  const double c = std::sqrt(2.0 * lambda0);
  boost::math::quadrature::tanh_sinh<double> integrator;
  const double section = dimension == 1 ? 1.0 : unit_ball_volume(dimension - 1);
  auto f = [&](double s) {
    const double rho2 = std::max(0.0, radius * radius - s * s);
    const double slice = dimension == 1 ? 1.0 : section * std::pow(rho2, 0.5 * (dimension - 1));
    return std::exp(c * s) * slice;
  };
  return integrator.integrate(f, -radius, radius, 1e-15);
}

double gamma_closed_form_1d(double lambda0, double radius) {
  const double c = std::sqrt(2.0 * lambda0);
  return 2.0 * std::sinh(c * radius) / c;
}

}  // namespace bbmf
