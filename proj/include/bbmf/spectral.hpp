// SPDX-License-Identifier: Apache-2.0
//
// Principal eigenpair (lambda0, psi) of L = 1/2 Delta + v, the ground-state
// tail constant C(u) and the ball constant gamma.
#pragma once

#include <span>
#include <vector>

#include "bbmf/model.hpp"
#include "bbmf/numerics.hpp"

namespace bbmf {

struct TailFit {
  /// d = 1: index 0 is direction -1, index 1 is direction +1. Radial: one entry.
  std::vector<double> constants;
  /// Slope of the compensated log-profile; zero when the decay rate is right.
  std::vector<double> residual_slopes;
  /// Fitted slope of ln psi against |y| (compare with -sqrt(2 lambda0)).
  std::vector<double> decay_rates;
  double window_lo = 0.0;
  double window_hi = 0.0;
};

struct SpectralData {
  int dimension = 1;
  bool radial = false;  ///< d >= 2: grid is the cell-centred radius grid
  Grid1D grid;
  double lambda0 = 0.0;
  std::vector<double> psi;
  TailFit tail;
  double gamma = 0.0;
  double ball_radius = 1.0;
  double residual = 0.0;  ///< ||L_h psi - lambda0 psi|| / ||psi||
  double norm = 0.0;  ///< L2 norm after normalization (quadrature)
  int iterations = 0;

  double decay_rate() const;  ///< sqrt(2 lambda0)
  /// C(u) for a direction; in d = 1 the sign of u[0] selects the side.
  double tail_constant_for(std::span<const double> direction) const;
  /// psi at a point: grid interpolation, tail asymptotics beyond the grid.
  double psi_at(std::span<const double> x) const;
  /// psi as a function of the reduced coordinate (x in d = 1, |x| otherwise).
  double psi_at_coordinate(double s) const;
  /// Integral of psi over the ball of radius `radius` centred at y (d = 1 only).
  double psi_ball_integral(double center, double radius) const;
};

struct SpectralOptions {
  double ball_radius = 1.0;
  double fit_lo = 0.0;  ///< 0 selects support_radius + 3
  double fit_hi = 0.0;  ///< 0 selects support_radius + 6
  int max_iterations = 500;
  double tolerance = 1e-10;
};

/// Shifted inverse power iteration on the second-order discretization of L.
/// Throws NumericalError("spectral", "subcritical potential") when the top
/// eigenvalue is not positive.
SpectralData principal_eigenpair(const PotentialSpec& potential, const GridSpec& grid,
                                 const SpectralOptions& options = {});

/// Ground state of the 1-D square well alpha0 on [-L, L] (beta = 0) from the
/// matching condition sqrt(2(a - l)) tan(sqrt(2(a - l)) L) = sqrt(2 l), by bisection.
double square_well_oracle(double alpha0, double half_width);

/// Least-squares tail fit over [r1, r2]. Errors: "window too narrow", "tail not resolved".
TailFit tail_constant(const SpectralData& spectral, double r1, double r2);

/// gamma = integral over the ball of radius R of exp(sqrt(2 lambda0) y_1), by
/// tanh-sinh quadrature.
double gamma_constant(double lambda0, int dimension, double ball_radius = 1.0);
/// 2 sinh(c R) / c with c = sqrt(2 lambda0).
double gamma_closed_form_1d(double lambda0, double ball_radius = 1.0);

}  // namespace bbmf
