// SPDX-License-Identifier: Apache-2.0
//
// Small numerical building blocks shared by the PDE stages: a uniform 1-D
// grid, a factored tridiagonal solver, and quadrature/interpolation helpers.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bbmf {

/// Uniform node-centred grid x_i = lo + i h, i = 0..size-1.
struct Grid1D {
  double lo = 0.0;
  double h = 0.0;
  std::size_t size = 0;

  /// Symmetric box [-M, M] with spacing h (M rounded up to a multiple of h).
  static Grid1D symmetric(double half_width, double h);

  double x(std::size_t i) const noexcept { return lo + static_cast<double>(i) * h; }
  double hi() const noexcept { return x(size - 1); }
  std::vector<double> coordinates() const;
  /// Nearest node index, clamped to the grid.
  std::size_t nearest(double x) const noexcept;
  bool operator==(const Grid1D&) const = default;
};

/// LU factors of a tridiagonal matrix (no pivoting; intended for diagonally
/// dominant or shifted operators).
class TridiagonalLU {
 public:
  TridiagonalLU() = default;
  TridiagonalLU(std::span<const double> sub, std::span<const double> diag, std::span<const double> sup);

  std::size_t size() const noexcept { return diag_.size(); }
  /// Solves in place.
  void solve(std::span<double> rhs) const;

 private:
  std::vector<double> sub_;
  std::vector<double> diag_;  ///< U diagonal
  std::vector<double> sup_;
};

/// Composite trapezoid of equally spaced samples.
double trapezoid(std::span<const double> f, double h);
/// Integral of the piecewise-linear interpolant of `f` on `grid` over [a, b].
double integrate_linear(const Grid1D& grid, std::span<const double> f, double a, double b);
/// Piecewise-linear interpolation on the grid, zero outside.
double interpolate(const Grid1D& grid, std::span<const double> f, double x);

/// C(n, k) in floating point.
double binomial(int n, int k);

}  // namespace bbmf
