// SPDX-License-Identifier: Apache-2.0
#include "bbmf/numerics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace bbmf {

Grid1D Grid1D::symmetric(double half_width, double h) {
  const auto cells = static_cast<std::size_t>(std::ceil(half_width / h - 1e-9));
  Grid1D g;
  g.h = h;
  g.lo = -static_cast<double>(cells) * h;
  g.size = 2 * cells + 1;
  return g;
}

std::vector<double> Grid1D::coordinates() const {
  std::vector<double> xs(size);
  for (std::size_t i = 0; i < size; ++i) xs[i] = x(i);
  return xs;
}

std::size_t Grid1D::nearest(double xv) const noexcept {
  const double s = std::round((xv - lo) / h);
  if (s <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(s), size - 1);
}

TridiagonalLU::TridiagonalLU(std::span<const double> sub, std::span<const double> diag, std::span<const double> sup)
    : sub_(diag.size()), diag_(diag.size()), sup_(sup.begin(), sup.end()) {
  const std::size_t n = diag.size();
  if (sub.size() + 1 != n || sup.size() + 1 != n) throw std::invalid_argument("tridiagonal: band size mismatch");
  diag_[0] = diag[0];
  for (std::size_t i = 1; i < n; ++i) {
    sub_[i] = sub[i - 1] / diag_[i - 1];
    diag_[i] = diag[i] - sub_[i] * sup[i - 1];
    if (diag_[i] == 0.0) throw std::runtime_error("tridiagonal: zero pivot");
  }
}

void TridiagonalLU::solve(std::span<double> r) const {
  const std::size_t n = diag_.size();
  assert(r.size() == n);
  for (std::size_t i = 1; i < n; ++i) r[i] -= sub_[i] * r[i - 1];
  r[n - 1] /= diag_[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) r[i] = (r[i] - sup_[i] * r[i + 1]) / diag_[i];
}

double trapezoid(std::span<const double> f, double h) {
  if (f.size() < 2) return 0.0;
  double s = 0.5 * (f.front() + f.back());
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
  return s * h;
}

double interpolate(const Grid1D& grid, std::span<const double> f, double xv) {
  const double s = (xv - grid.lo) / grid.h;
  if (s < 0.0 || s > static_cast<double>(grid.size - 1)) return 0.0;
  auto i = static_cast<std::size_t>(s);
  if (i >= grid.size - 1) return f[grid.size - 1];
  const double w = s - static_cast<double>(i);
  return (1.0 - w) * f[i] + w * f[i + 1];
}

double integrate_linear(const Grid1D& grid, std::span<const double> f, double a, double b) {
  if (b <= a) return 0.0;
  a = std::max(a, grid.lo);
  b = std::min(b, grid.hi());
  if (b <= a) return 0.0;
  const double sa = (a - grid.lo) / grid.h;
  const double sb = (b - grid.lo) / grid.h;
  auto ia = static_cast<std::size_t>(std::floor(sa));
  auto ib = std::min(static_cast<std::size_t>(std::floor(sb)), grid.size - 1);
  double total = 0.0;
  // Partial first cell, full interior cells, partial last cell.
  if (ia == ib) return 0.5 * (interpolate(grid, f, a) + interpolate(grid, f, b)) * (b - a);
  const double xa_next = grid.x(ia + 1);
  total += 0.5 * (interpolate(grid, f, a) + f[ia + 1]) * (xa_next - a);
  for (std::size_t i = ia + 1; i < ib; ++i) total += 0.5 * (f[i] + f[i + 1]) * grid.h;
  total += 0.5 * (f[ib] + interpolate(grid, f, b)) * (b - grid.x(ib));
  return total;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

}  // namespace bbmf
