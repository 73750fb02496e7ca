// SPDX-License-Identifier: Apache-2.0
//
// Exact Monte Carlo for branching Brownian motion with bounded, compactly
// supported branching (alpha) and killing (beta) rates, by Poisson thinning.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bbmf/model.hpp"
#include "bbmf/parallel.hpp"

namespace bbmf {

/// What a replica records at each checkpoint.
struct Observation {
  std::vector<double> checkpoints;  ///< strictly increasing, > 0
  std::vector<std::vector<double>> centers;  ///< centers[c][b]: ball centre (flattened d coords) per offset
  double ball_radius = 1.0;
  double lambda0 = 0.0;  ///< used in M_t = e^{-lambda0 t} sum psi(X_i)
  /// psi at a point; empty means psi = 1.
  std::vector<double> psi_grid;
  double psi_lo = 0.0, psi_h = 0.0;
  double psi_tail_minus = 0.0, psi_tail_plus = 0.0;  ///< d = 1 tails beyond the grid
  bool psi_radial = false;
  double decay_rate = 0.0;
  /// Presence probes: centres (flattened) per checkpoint, ball_radius each.
  std::vector<std::vector<double>> probes;
  /// Front position a(t) per checkpoint, for counting particles beyond it along `direction`.
  std::vector<double> front;
  std::vector<double> direction{1.0};
  bool keep_positions = false;

  double psi(std::span<const double> x) const;
};

struct CheckpointObs {
  double t = 0.0;
  std::int64_t population = 0;
  double max_norm = 0.0;
  double martingale = 0.0;
  std::vector<std::int64_t> counts;  ///< per ball centre
  std::int64_t beyond_front = 0;
  std::vector<std::uint8_t> presence;  ///< per probe
  std::vector<double> positions;  ///< only with keep_positions
};

struct ReplicaResult {
  std::uint64_t replica = 0;
  bool excluded = false;  ///< population cap exceeded
  bool survived = false;  ///< N_T > 0
  std::int64_t branches = 0;
  std::int64_t deaths = 0;
  std::int64_t proposals = 0;
  std::vector<CheckpointObs> obs;
};

struct SimulationSetup {
  PotentialSpec potential;
  std::vector<double> x0{0.0};
  std::uint64_t seed = 1;
  std::int64_t max_particles = 1'000'000;
  Observation observe;
};

/// One replica. Randomness is keyed on (seed, replica); each particle draws
/// from its own counter stream named by its lineage id, and the proposal clock
/// has a separate stream, so results do not depend on scheduling.
ReplicaResult simulate_replica(const SimulationSetup& setup, std::uint64_t replica);

/// Replicas first .. first + count - 1, returned in replica order.
std::vector<ReplicaResult> run_ensemble(const SimulationSetup& setup, std::uint64_t first, std::uint64_t count,
                                        Execution exec = Execution::parallel);

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

struct BallSummary {
  std::vector<double> center;
  double m1 = 0.0;
  Estimate count;
  std::vector<Estimate> eta;  ///< eta[k-1] = E eta^k
};

struct CheckpointSummary {
  double t = 0.0;
  std::size_t replicas = 0;
  std::size_t survivors = 0;
  double survival_fraction = 0.0;
  Estimate population;
  Estimate martingale;
  std::vector<BallSummary> balls;
  bool unreliable = false;
};

struct EstimatorSummary {
  std::size_t replicas = 0;
  std::size_t excluded = 0;
  int batches = 0;
  int k_max = 1;
  std::vector<CheckpointSummary> checkpoints;
  std::vector<std::string> warnings;
};

/// fixed_order sums batch by batch in replica order; unordered lets OpenMP
/// reduce the grand total, so the last bits of the mean may vary between runs.
enum class Reduction { fixed_order, unordered };

/// Batch-means estimate of the mean of `values` (contiguous batches, >= 30).
Estimate batch_mean(std::span<const double> values, int batches, Reduction reduction = Reduction::fixed_order);

/// Unconditional moments of eta = n / m1 (extinct replicas contribute 0).
/// m1[c][b] is the PDE first moment per checkpoint and ball. Replicas that hit
/// the population cap are dropped and counted.
EstimatorSummary estimate_moments(std::span<const ReplicaResult> replicas,
                                  const std::vector<std::vector<double>>& m1, int k_max, int batches,
                                  Execution exec = Execution::serial,
                                  Reduction reduction = Reduction::fixed_order);

struct MartingaleRow {
  double t = 0.0;
  Estimate value;
  double z = 0.0;
  bool ok = true;
};

struct MartingaleReport {
  double target = 0.0;
  std::vector<MartingaleRow> rows;
  bool flagged = false;
};

/// Means of M_t against psi(x0), flagging |z| > 3.
MartingaleReport martingale_check(std::span<const ReplicaResult> replicas, double psi_x0, int batches);

struct FrontRow {
  double t = 0.0;
  std::size_t survivors = 0;
  double survival_fraction = 0.0;
  double median_speed = 0.0;  ///< median of R_t / t over survivors
  double q10 = 0.0, q90 = 0.0;
  double mean_beyond = 0.0;
};

std::vector<FrontRow> front_statistics(std::span<const ReplicaResult> replicas);

/// Fraction of replicas with at least one particle in each probe ball, per checkpoint.
std::vector<std::vector<double>> presence_profile(std::span<const ReplicaResult> replicas);

}  // namespace bbmf
