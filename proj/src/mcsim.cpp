// SPDX-License-Identifier: Apache-2.0
#include "bbmf/mcsim.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bbmf/errors.hpp"
#include "bbmf/philox.hpp"

namespace bbmf {

namespace {

constexpr std::uint32_t kProposalTag = 0x80000000u;

struct Particles {
  int d = 1;
  std::vector<double> x;
  std::vector<double> t;
  std::vector<std::uint64_t> id;
  std::vector<std::uint32_t> draws;
  std::vector<std::uint32_t> branches;

  std::size_t size() const noexcept { return t.size(); }

  void push(std::span<const double> pos, double time, std::uint64_t lineage) {
    x.insert(x.end(), pos.begin(), pos.end());
    t.push_back(time);
    id.push_back(lineage);
    draws.push_back(0);
    branches.push_back(0);
  }

  void remove(std::size_t j) {
    const std::size_t last = size() - 1;
    if (j != last) {
      for (int k = 0; k < d; ++k) x[j * d + k] = x[last * d + k];
      t[j] = t[last];
      id[j] = id[last];
      draws[j] = draws[last];
      branches[j] = branches[last];
    }
    x.resize(last * d);
    t.pop_back();
    id.pop_back();
    draws.pop_back();
    branches.pop_back();
  }

  std::span<const double> pos(std::size_t j) const { return {x.data() + j * d, static_cast<std::size_t>(d)}; }
};

class Replica {
 public:
  Replica(const SimulationSetup& setup, std::uint64_t replica) : setup_(setup) {
    const std::uint64_t k = mix64(setup.seed);
    key_ = {static_cast<std::uint32_t>(replica), static_cast<std::uint32_t>(k) ^ static_cast<std::uint32_t>(replica >> 32)};
    p_.d = static_cast<int>(setup.x0.size());
    p_.push(setup.x0, 0.0, mix64(setup.seed ^ 0xA5A5A5A55A5A5A5Aull));
    out_.replica = replica;
  }

  ReplicaResult run() {
    const auto& ob = setup_.observe;
    const double rate = setup_.potential.total_rate_bound();
    double t = 0.0;
    std::size_t next = 0;
    std::uint64_t q = 0;
    const double horizon = ob.checkpoints.empty() ? 0.0 : ob.checkpoints.back();
    while (next < ob.checkpoints.size()) {
      if (p_.size() == 0) {
        for (; next < ob.checkpoints.size(); ++next) record(next);
        break;
      }
      double t_next = horizon + 1.0;
      PhiloxCounter block{};
      if (rate > 0.0) {
        block = philox4x32({static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(q >> 32), 0, kProposalTag}, key_);
        t_next = t - std::log(unit_open(block[0], block[1])) / (rate * static_cast<double>(p_.size()));
      }
      while (next < ob.checkpoints.size() && ob.checkpoints[next] <= t_next) {
        for (std::size_t j = 0; j < p_.size(); ++j) advance(j, ob.checkpoints[next]);
        record(next);
        ++next;
      }
      if (next >= ob.checkpoints.size()) break;
      t = t_next;
      ++out_.proposals;
      const auto n = static_cast<double>(p_.size());
      const auto j = std::min(static_cast<std::size_t>(unit_open(block[2], block[3]) * n), p_.size() - 1);
      const auto accept_block =
          philox4x32({static_cast<std::uint32_t>(q), static_cast<std::uint32_t>(q >> 32), 1, kProposalTag}, key_);
      ++q;
      advance(j, t);
      const Rates r = setup_.potential.at(p_.pos(j));
      const double u = unit_open(accept_block[0], accept_block[1]) * rate;
      if (u < r.alpha) {
        ++out_.branches;
        const std::uint64_t child = mix64(p_.id[j] ^ mix64(++p_.branches[j]));
        scratch_.assign(p_.pos(j).begin(), p_.pos(j).end());
        p_.push(scratch_, t, child);
        if (static_cast<std::int64_t>(p_.size()) > setup_.max_particles) {
          out_.excluded = true;
          return out_;
        }
      } else if (u < r.alpha + r.beta) {
        ++out_.deaths;
        p_.remove(j);
      }
    }
    out_.survived = !out_.obs.empty() && out_.obs.back().population > 0;
    return out_;
  }

 private:
  void advance(std::size_t j, double t) {
    const double dt = t - p_.t[j];
    if (dt <= 0.0) return;
    const double s = std::sqrt(dt);
    const std::uint64_t id = p_.id[j];
    for (int k = 0; k < p_.d; k += 2) {
      const auto block =
          philox4x32({static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32), p_.draws[j]++, 0}, key_);
      const auto z = normal_pair(block);
      p_.x[j * p_.d + k] += s * z[0];
      if (k + 1 < p_.d) p_.x[j * p_.d + k + 1] += s * z[1];
    }
    p_.t[j] = t;
  }

  void record(std::size_t c) {
    const auto& ob = setup_.observe;
    CheckpointObs o;
    o.t = ob.checkpoints[c];
    o.population = static_cast<std::int64_t>(p_.size());
    const auto& centers = c < ob.centers.size() ? ob.centers[c] : std::vector<double>{};
    const auto& probes = c < ob.probes.size() ? ob.probes[c] : std::vector<double>{};
    const int d = p_.d;
    const std::size_t nb = centers.size() / d, np = probes.size() / d;
    o.counts.assign(nb, 0);
    o.presence.assign(np, 0);
    const double r2 = ob.ball_radius * ob.ball_radius;
    double probe_floor = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < np; ++b) {
      double along = 0.0;
      for (int k = 0; k < d; ++k) along += probes[b * d + k] * ob.direction[k];
      probe_floor = std::min(probe_floor, along - ob.ball_radius);
    }
    const bool count_front = c < ob.front.size();
    double psi_sum = 0.0;
    for (std::size_t j = 0; j < p_.size(); ++j) {
      const auto x = p_.pos(j);
      double n2 = 0.0, along = 0.0;
      for (int k = 0; k < d; ++k) {
        n2 += x[k] * x[k];
        along += x[k] * ob.direction[k];
      }
      o.max_norm = std::max(o.max_norm, std::sqrt(n2));
      psi_sum += ob.psi(x);
      if (count_front && along > ob.front[c]) ++o.beyond_front;
      for (std::size_t b = 0; b < nb; ++b) {
        double dist = 0.0;
        for (int k = 0; k < d; ++k) dist += (x[k] - centers[b * d + k]) * (x[k] - centers[b * d + k]);
        if (dist <= r2) ++o.counts[b];
      }
      if (along < probe_floor) continue;
      for (std::size_t b = 0; b < np; ++b) {
        if (o.presence[b]) continue;
        double dist = 0.0;
        for (int k = 0; k < d; ++k) dist += (x[k] - probes[b * d + k]) * (x[k] - probes[b * d + k]);
        if (dist <= r2) o.presence[b] = 1;
      }
    }
    o.martingale = std::exp(-ob.lambda0 * o.t) * psi_sum;
    if (ob.keep_positions) o.positions = p_.x;
    out_.obs.push_back(std::move(o));
  }

  const SimulationSetup& setup_;
  PhiloxKey key_{};
  Particles p_;
  std::vector<double> scratch_;
  ReplicaResult out_;
};

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double w = pos - static_cast<double>(i);
  return i + 1 < v.size() ? (1 - w) * v[i] + w * v[i + 1] : v[i];
}

}  // namespace

double Observation::psi(std::span<const double> x) const {
  if (psi_grid.empty()) return 1.0;
  double s = x[0];
  if (psi_radial) {
    double r2 = 0.0;
    for (double c : x) r2 += c * c;
    s = std::sqrt(r2);
  }
  const double pos = (s - psi_lo) / psi_h;
  const double last = static_cast<double>(psi_grid.size() - 1);
  if (psi_radial && pos < 0.0) return psi_grid.front();
  if (pos >= 0.0 && pos <= last) {
    const auto i = std::min(static_cast<std::size_t>(pos), psi_grid.size() - 2);
    const double w = pos - static_cast<double>(i);
    return (1 - w) * psi_grid[i] + w * psi_grid[i + 1];
  }
  const double c = s < 0.0 ? psi_tail_minus : psi_tail_plus;
  const double dim = static_cast<double>(x.size());
  const double r = std::abs(s);
  return c * (psi_radial ? std::pow(r, 0.5 * (1 - dim)) : 1.0) * std::exp(-decay_rate * r);
}

ReplicaResult simulate_replica(const SimulationSetup& setup, std::uint64_t replica) {
  if (setup.x0.empty()) throw std::invalid_argument("simulate_replica: empty x0");
  return Replica(setup, replica).run();
}

std::vector<ReplicaResult> run_ensemble(const SimulationSetup& setup, std::uint64_t first, std::uint64_t count,
                                        Execution exec) {
  std::vector<ReplicaResult> out(count);
  const auto n = static_cast<std::int64_t>(count);
  if (exec == Execution::serial) {
    for (std::int64_t i = 0; i < n; ++i) out[i] = simulate_replica(setup, first + i);
    return out;
  }
  std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = simulate_replica(setup, first + i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (std::int64_t i = 0; i < n; ++i)
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "replica " << first + i << ": " << e.what();
        throw NumericalError("mcsim", os.str());
      }
    }
  return out;
}

Estimate batch_mean(std::span<const double> values, int batches, Reduction reduction) {
  Estimate e;
  const std::size_t n = values.size();
  if (n == 0) return e;
  const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(std::max(batches, 1)), n);
  std::vector<double> means(b, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t lo = i * n / b, hi = (i + 1) * n / b;
    double s = 0.0;
    for (std::size_t j = lo; j < hi; ++j) s += values[j];
    if (reduction == Reduction::fixed_order) total += s;
    means[i] = s / static_cast<double>(hi - lo);
  }
  if (reduction == Reduction::unordered) {
    const auto ni = static_cast<std::int64_t>(n);
#pragma omp parallel for reduction(+ : total)
    for (std::int64_t j = 0; j < ni; ++j) total += values[j];
  }
  e.mean = total / static_cast<double>(n);
  if (b < 2) return e;
  // Batches differ in size by at most one; weight them equally.
  double mbar = 0.0;
  for (double m : means) mbar += m;
  mbar /= static_cast<double>(b);
  double ss = 0.0;
  for (double m : means) ss += (m - mbar) * (m - mbar);
  e.se = std::sqrt(ss / static_cast<double>(b - 1) / static_cast<double>(b));
  return e;
}

EstimatorSummary estimate_moments(std::span<const ReplicaResult> replicas,
                                  const std::vector<std::vector<double>>& m1, int k_max, int batches, Execution exec,
                                  Reduction reduction) {
  EstimatorSummary out;
  out.batches = batches;
  out.k_max = k_max;
  std::vector<const ReplicaResult*> used;
  for (const auto& r : replicas) {
    if (r.excluded)
      ++out.excluded;
    else
      used.push_back(&r);
  }
  out.replicas = used.size();
  if (out.excluded > 0) {
    std::ostringstream os;
    os << out.excluded << " replica(s) excluded (population cap exceeded)";
    out.warnings.push_back(os.str());
  }
  if (used.empty()) return out;
  const std::size_t n = used.size();
  const std::size_t nc = used.front()->obs.size();
  std::vector<double> buf(n);
  for (std::size_t c = 0; c < nc; ++c) {
    CheckpointSummary cs;
    cs.t = used.front()->obs[c].t;
    cs.replicas = n;
    for (const auto* r : used) cs.survivors += r->obs[c].population > 0 ? 1 : 0;
    cs.survival_fraction = static_cast<double>(cs.survivors) / static_cast<double>(n);
    if (cs.survivors < 100) {
      cs.unreliable = true;
      std::ostringstream os;
      os << "estimates unreliable at t = " << cs.t << " (" << cs.survivors << " surviving replicas)";
      out.warnings.push_back(os.str());
    }
    for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<double>(used[i]->obs[c].population);
    cs.population = batch_mean(buf, batches, reduction);
    for (std::size_t i = 0; i < n; ++i) buf[i] = used[i]->obs[c].martingale;
    cs.martingale = batch_mean(buf, batches, reduction);
    const std::size_t nb = used.front()->obs[c].counts.size();
    for (std::size_t b = 0; b < nb; ++b) {
      BallSummary bs;
      bs.m1 = m1.at(c).at(b);
      if (!(bs.m1 > 0.0)) throw NumericalError("mcsim", "first moment must be positive to normalize eta");
      for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<double>(used[i]->obs[c].counts[b]);
      bs.count = batch_mean(buf, batches, reduction);
      bs.eta.resize(k_max);
      std::vector<std::vector<double>> powers(k_max, std::vector<double>(n));
      const auto ni = static_cast<std::int64_t>(n);
      auto fill = [&](std::int64_t i) {
        const double eta = static_cast<double>(used[i]->obs[c].counts[b]) / bs.m1;
        double p = 1.0;
        for (int k = 1; k <= k_max; ++k) {
          p *= eta;
          powers[k - 1][i] = p;
        }
      };
      if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < ni; ++i) fill(i);
      } else {
        for (std::int64_t i = 0; i < ni; ++i) fill(i);
      }
      for (int k = 1; k <= k_max; ++k) bs.eta[k - 1] = batch_mean(powers[k - 1], batches, reduction);
      cs.balls.push_back(std::move(bs));
    }
    out.checkpoints.push_back(std::move(cs));
  }
  return out;
}

MartingaleReport martingale_check(std::span<const ReplicaResult> replicas, double psi_x0, int batches) {
  MartingaleReport out;
  out.target = psi_x0;
  std::vector<const ReplicaResult*> used;
  for (const auto& r : replicas)
    if (!r.excluded) used.push_back(&r);
  if (used.empty()) return out;
  std::vector<double> buf(used.size());
  for (std::size_t c = 0; c < used.front()->obs.size(); ++c) {
    MartingaleRow row;
    row.t = used.front()->obs[c].t;
    for (std::size_t i = 0; i < used.size(); ++i) buf[i] = used[i]->obs[c].martingale;
    row.value = batch_mean(buf, batches);
    row.z = row.value.se > 0.0 ? (row.value.mean - psi_x0) / row.value.se : 0.0;
    row.ok = std::abs(row.z) <= 3.0;
    out.flagged = out.flagged || !row.ok;
    out.rows.push_back(row);
  }
  return out;
}

std::vector<FrontRow> front_statistics(std::span<const ReplicaResult> replicas) {
  std::vector<FrontRow> out;
  std::vector<const ReplicaResult*> used;
  for (const auto& r : replicas)
    if (!r.excluded) used.push_back(&r);
  if (used.empty()) return out;
  for (std::size_t c = 0; c < used.front()->obs.size(); ++c) {
    FrontRow row;
    row.t = used.front()->obs[c].t;
    std::vector<double> speeds;
    double beyond = 0.0;
    for (const auto* r : used) {
      const auto& o = r->obs[c];
      if (o.population == 0) continue;
      speeds.push_back(o.max_norm / o.t);
      beyond += static_cast<double>(o.beyond_front);
    }
    row.survivors = speeds.size();
    row.survival_fraction = static_cast<double>(speeds.size()) / static_cast<double>(used.size());
    row.median_speed = quantile(speeds, 0.5);
    row.q10 = quantile(speeds, 0.1);
    row.q90 = quantile(speeds, 0.9);
    row.mean_beyond = speeds.empty() ? 0.0 : beyond / static_cast<double>(speeds.size());
    out.push_back(row);
  }
  return out;
}

std::vector<std::vector<double>> presence_profile(std::span<const ReplicaResult> replicas) {
  std::vector<std::vector<double>> out;
  std::vector<const ReplicaResult*> used;
  for (const auto& r : replicas)
    if (!r.excluded) used.push_back(&r);
  if (used.empty()) return out;
  for (std::size_t c = 0; c < used.front()->obs.size(); ++c) {
    std::vector<double> frac(used.front()->obs[c].presence.size(), 0.0);
    for (const auto* r : used)
      for (std::size_t b = 0; b < frac.size(); ++b) frac[b] += r->obs[c].presence[b];
    for (auto& f : frac) f /= static_cast<double>(used.size());
    out.push_back(std::move(frac));
  }
  return out;
}

}  // namespace bbmf
