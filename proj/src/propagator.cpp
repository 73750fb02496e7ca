// SPDX-License-Identifier: Apache-2.0
#include "bbmf/propagator.hpp"

#include <cassert>
#include <stdexcept>

namespace bbmf {

std::vector<double> growth_on_grid(const PotentialSpec& spec, const Grid1D& grid) {
  std::vector<double> v(grid.size);
  for (std::size_t i = 0; i < grid.size; ++i) {
    const double x = grid.x(i);
    v[i] = spec.cell_average(x - 0.5 * grid.h, x + 0.5 * grid.h).v();
  }
  return v;
}

std::vector<double> alpha_on_grid(const PotentialSpec& spec, const Grid1D& grid) {
  std::vector<double> a(grid.size);
  for (std::size_t i = 0; i < grid.size; ++i) {
    const double x = grid.x(i);
    a[i] = spec.cell_average(x - 0.5 * grid.h, x + 0.5 * grid.h).alpha;
  }
  return a;
}

CrankNicolson::CrankNicolson(const Grid1D& grid, std::vector<double> coefficient, double dt)
    : grid_(grid), coefficient_(std::move(coefficient)), dt_(dt) {
  if (grid_.size < 3) throw std::invalid_argument("CrankNicolson: grid too small");
  if (coefficient_.size() != grid_.size) throw std::invalid_argument("CrankNicolson: coefficient size");
  const std::size_t m = grid_.size - 2;
  const double k = 0.5 / (grid_.h * grid_.h);  // 1/2 * 1/h^2
  std::vector<double> sub(m - 1, -0.5 * dt_ * k), sup(m - 1, -0.5 * dt_ * k), diag(m);
  for (std::size_t i = 0; i < m; ++i) diag[i] = 1.0 - 0.5 * dt_ * (-2.0 * k + coefficient_[i + 1]);
  lhs_ = TridiagonalLU(sub, diag, sup);
}

void CrankNicolson::apply(std::span<const double> in, std::span<double> out) const {
  const std::size_t n = grid_.size;
  const double k = 0.5 / (grid_.h * grid_.h);
  out[0] = 0.0;
  out[n - 1] = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i)
    out[i] = k * (in[i - 1] - 2.0 * in[i] + in[i + 1]) + coefficient_[i] * in[i];
}

void CrankNicolson::step(std::span<double> u, std::span<double> work) const {
  const std::size_t n = grid_.size;
  assert(u.size() == n && work.size() >= n);
  const double k = 0.5 / (grid_.h * grid_.h);
  const double half = 0.5 * dt_;
  for (std::size_t i = 1; i + 1 < n; ++i)
    work[i] = u[i] + half * (k * (u[i - 1] - 2.0 * u[i] + u[i + 1]) + coefficient_[i] * u[i]);
  lhs_.solve(work.subspan(1, n - 2));
  u[0] = 0.0;
  u[n - 1] = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) u[i] = work[i];
}

void CrankNicolson::step(std::span<double> u, std::span<const double> s_old, std::span<const double> s_new,
                         std::span<double> work) const {
  const std::size_t n = grid_.size;
  const double k = 0.5 / (grid_.h * grid_.h);
  const double half = 0.5 * dt_;
  for (std::size_t i = 1; i + 1 < n; ++i)
    work[i] = u[i] + half * (k * (u[i - 1] - 2.0 * u[i] + u[i + 1]) + coefficient_[i] * u[i] + s_old[i] + s_new[i]);
  lhs_.solve(work.subspan(1, n - 2));
  u[0] = 0.0;
  u[n - 1] = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) u[i] = work[i];
}

void CrankNicolson::implicit_half_step(std::span<double> u, std::span<const double> source) const {
  const std::size_t n = grid_.size;
  for (std::size_t i = 1; i + 1 < n; ++i) u[i] += 0.5 * dt_ * source[i];
  lhs_.solve(u.subspan(1, n - 2));
  u[0] = 0.0;
  u[n - 1] = 0.0;
}

void CrankNicolson::implicit_half_step(std::span<double> u) const {
  const std::size_t n = grid_.size;
  lhs_.solve(u.subspan(1, n - 2));
  u[0] = 0.0;
  u[n - 1] = 0.0;
}

void CrankNicolson::advance(std::span<double> u, int steps, bool smooth_start) const {
  std::vector<double> work(grid_.size);
  int done = 0;
  if (smooth_start) {
    for (; done < std::min(steps, 2); ++done) {
      implicit_half_step(u);
      implicit_half_step(u);
    }
  }
  for (; done < steps; ++done) step(u, work);
}

}  // namespace bbmf
