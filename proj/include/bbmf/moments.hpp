// SPDX-License-Identifier: Apache-2.0
//
// Factorial-moment recursion G_k, limit moments f^k and f^k_{b,u}, finite-time
// moments m_k^y(t, x0) and the crude-bound / Carleman diagnostics.
#pragma once

#include <span>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "bbmf/heatkernel.hpp"
#include "bbmf/model.hpp"
#include "bbmf/numerics.hpp"
#include "bbmf/parallel.hpp"
#include "bbmf/spectral.hpp"

namespace bbmf {

/// Stirling numbers of the second kind S(k, j), 1 <= j <= k <= k_max, exact.
class StirlingTable {
 public:
  explicit StirlingTable(int k_max);

  int k_max() const noexcept { return k_max_; }
  const boost::multiprecision::cpp_int& exact(int k, int j) const;
  double operator()(int k, int j) const;

 private:
  int k_max_;
  std::vector<std::vector<boost::multiprecision::cpp_int>> s_;
};

StirlingTable stirling(int k_max);

struct TailRecord {
  double truncated = 0.0;  ///< truncated time integral at x0
  double tail = 0.0;  ///< analytic correction at x0
  double overlap = 0.0;  ///< <psi, source>
};

struct MomentOptions {
  double r_max = 0.0;  ///< 0: grid.r_max, then 25 / lambda0
  double dt = 0.0;  ///< 0: grid.dt
};

struct MomentTable {
  Grid1D grid;
  int k_max = 1;
  double lambda0 = 0.0;
  double r_max = 0.0;
  double dt = 0.0;
  double x0 = 0.0;
  std::vector<std::vector<double>> G;  ///< G[k - 1][i]; G[0] is psi
  std::vector<TailRecord> tails;  ///< index k - 1 (entry 0 unused)

  double G_at(int k, double x) const;
  /// G_k(x) / psi(x)^k.
  double f(int k, double x) const;
};

/// G_1 = psi; for k >= 2, G_k = int_0^R e^{-k lambda0 r} P_r g_k dr + tail with
/// g_k = alpha sum_i C(k, i) G_i G_{k-i}. P_r is applied by Crank-Nicolson on
/// the discounted density w = e^{-lambda0 r} P_r g_k.
/// Throws NumericalError("moments", "tail not negligible ...").
MomentTable compute_Gk(const SpectralData& spectral, const PotentialSpec& potential, const GridSpec& grid, int k_max,
                       double x0, const MomentOptions& options = {});

/// Source term alpha sum_{i=1}^{k-1} C(k, i) G_i G_{k-i} on the grid.
std::vector<double> recursion_source(const MomentTable& table, std::span<const double> alpha, int k);

/// f^k(x0), k = 1..k_max.
std::vector<double> limit_moments_interior(const MomentTable& table, double x0);

/// gamma C(u) (lambda0/2)^{(1-d)/4} e^{sqrt(2 lambda0) b}.
double front_scale(const SpectralData& spectral, std::span<const double> direction, double b);

/// f^k_{b,u}(x0) = psi^{-k} sum_j S(k, j) G_j front_scale^{j-k}, k = 1..k_max.
std::vector<double> limit_moments_front(const MomentTable& table, const SpectralData& spectral, double b,
                                        std::span<const double> direction, double x0);

struct FiniteTimeMoments {
  double t = 0.0;
  double center = 0.0;
  std::vector<double> m;  ///< m[k-1]: m_1 from the kernel table, Duhamel quadrature for k >= 2
  std::vector<double> forward;  ///< m_k(t, x0) from the forward moment system
};

/// Forward system d/dt m_k = L m_k + alpha sum_i C(k, i) m_i m_{k-i} with m_1(0) = 1_{U_y},
/// m_k(0) = 0. Returns m_k(t, .) on the grid, k = 1..k_max, at every requested time.
std::vector<std::vector<std::vector<double>>> forward_moments(const PotentialSpec& potential, const GridSpec& grid,
                                                              double center, double ball_radius,
                                                              std::span<const double> times, int k_max);

/// Needs a kernel table from x0 with a dense trace covering the support of alpha.
/// Throws NumericalError("moments", "horizon exceeded") when t exceeds the table.
FiniteTimeMoments finite_time_mk(const HeatKernelTable& kernel, const SpectralData& spectral,
                                 const PotentialSpec& potential, const GridSpec& grid, double center, double t,
                                 int k_max, double ball_radius = 1.0);

/// E[n^k] = sum_{i <= k} S(k, i) m_i.
double kth_moment_count(std::span<const double> m, int k);
/// E[eta^k] = E[n^k] / m_1^k, k = 1..m.size().
std::vector<double> normalized_moments(std::span<const double> m);

struct SemigroupIntegrals {
  double a = 0.0;  ///< sup over r and x in Gamma of e^{-lambda0 r} (P_r alpha)(x)
  std::vector<double> tn_norm;  ///< index n - 1: sup_Gamma T_n(1), n >= 2 (entry 0 unused)
};

/// T_n(1)(x) = int_0^inf e^{-n lambda0 r} (P_r alpha)(x) dr for n = 2..k_max (truncation plus tail).
SemigroupIntegrals semigroup_integrals(const SpectralData& spectral, const PotentialSpec& potential,
                                       const GridSpec& grid, int k_max, double gamma_lo, double gamma_hi,
                                       const MomentOptions& options = {});

/// C_1 given; C_k = sum_i C(k, i) C_i C_{k-i} sup_Gamma T_k(1).
std::vector<double> crude_constants(double c1, const SemigroupIntegrals& integrals, int k_max);

struct CarlemanReport {
  double a = 0.0;
  double A = 0.0;
  double operator_A = 0.0;  ///< max(2, 2a / lambda0) before absorbing sup f^2
  std::vector<double> sup_f;  ///< index n - 1
  std::vector<double> bound;  ///< A^{2n-1} n!
  std::vector<double> ratio;  ///< sup_f / bound
  std::vector<double> partial_sums;  ///< sum_{k <= n} (1 / f^k(x0))^{1/(2k)}
  bool f2_within_operator_bound = false;
  bool violated = false;
};

/// Sup of f^n over the grid points of Gamma = [gamma_lo, gamma_hi].
CarlemanReport carleman_diagnostics(const MomentTable& table, const SemigroupIntegrals& integrals, double gamma_lo,
                                    double gamma_hi);

struct CrudeScan {
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = 0.0;  ///< max m_k / (C_k e^{k lambda0 t} psi(y)^k)
};

/// m_k^y(t, x0) <= C_k e^{k lambda0 t} psi^k(y) over a scan of centres and times.
CrudeScan crude_bound_scan(const SpectralData& spectral, const PotentialSpec& potential, const GridSpec& grid,
                           std::span<const double> centers, std::span<const double> times,
                           std::span<const double> constants, double x0, double ball_radius = 1.0,
                           Execution exec = Execution::parallel);

}  // namespace bbmf
