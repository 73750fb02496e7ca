// SPDX-License-Identifier: Apache-2.0
//
// Crank-Nicolson time stepping for du/dt = 1/2 u'' + c(x) u + s(t, x) on a
// uniform 1-D grid with homogeneous Dirichlet ends.
#pragma once

#include <span>
#include <vector>

#include "bbmf/model.hpp"
#include "bbmf/numerics.hpp"

namespace bbmf {

/// Cell-averaged rates at the grid nodes (cell [x_i - h/2, x_i + h/2]). Cell
/// averaging keeps the discretization second order across rate jumps.
std::vector<double> growth_on_grid(const PotentialSpec& spec, const Grid1D& grid);  // v = alpha - beta
std::vector<double> alpha_on_grid(const PotentialSpec& spec, const Grid1D& grid);

class CrankNicolson {
 public:
  /// `coefficient` is c(x_i), typically v - shift.
  CrankNicolson(const Grid1D& grid, std::vector<double> coefficient, double dt);

  const Grid1D& grid() const noexcept { return grid_; }
  double dt() const noexcept { return dt_; }
  std::span<const double> coefficient() const noexcept { return coefficient_; }

  /// out = (1/2 D2 + c) in, with zero boundary values.
  void apply(std::span<const double> in, std::span<double> out) const;

  /// One Crank-Nicolson step of size dt. `work` must have grid.size entries.
  void step(std::span<double> u, std::span<double> work) const;
  /// One step with the source averaged in time: dt/2 (s_old + s_new).
  void step(std::span<double> u, std::span<const double> s_old, std::span<const double> s_new,
            std::span<double> work) const;
  /// Backward Euler step of size dt/2 (shares the CN factorization). Two of
  /// these replace one CN step to damp rough initial data (Rannacher start).
  void implicit_half_step(std::span<double> u, std::span<const double> source) const;
  void implicit_half_step(std::span<double> u) const;

  /// Advances `steps` steps; when `smooth_start` is set the first two CN steps
  /// are replaced by four implicit half steps.
  void advance(std::span<double> u, int steps, bool smooth_start) const;

 private:
  Grid1D grid_;
  std::vector<double> coefficient_;
  double dt_ = 0.0;
  TridiagonalLU lhs_;  ///< I - dt/2 A on interior nodes
};

}  // namespace bbmf
