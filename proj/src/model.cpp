// SPDX-License-Identifier: Apache-2.0
#include "bbmf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace bbmf {

ConfigError::ConfigError(std::vector<Violation> violations)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "invalid configuration:";
        for (const auto& v : violations) os << " [" << v.field << "] " << v.message << ";";
        return os.str();
      }()),
      violations_(std::move(violations)) {}

ConfigError::ConfigError(std::string field, std::string message)
    : ConfigError(std::vector<Violation>{{std::move(field), std::move(message)}}) {}

bool ConfigError::mentions(const std::string& needle) const {
  return std::any_of(violations_.begin(), violations_.end(), [&](const Violation& v) {
    return v.message.find(needle) != std::string::npos || v.field.find(needle) != std::string::npos;
  });
}

// ---------------------------------------------------------------------------
// PotentialSpec

PotentialSpec PotentialSpec::piecewise(int dimension, std::vector<PotentialPiece> pieces) {
  PotentialSpec spec;
  spec.dimension_ = dimension;
  spec.kind_ = PotentialKind::piecewise;
  spec.pieces_ = std::move(pieces);
  spec.refresh();
  return spec;
}

PotentialSpec PotentialSpec::tabulated(int dimension, std::vector<double> nodes, std::vector<double> alpha,
                                       std::vector<double> beta) {
  PotentialSpec spec;
  spec.dimension_ = dimension;
  spec.kind_ = PotentialKind::tabulated;
  spec.nodes_ = std::move(nodes);
  spec.table_alpha_ = std::move(alpha);
  spec.table_beta_ = std::move(beta);
  spec.refresh();
  return spec;
}

void PotentialSpec::refresh() {
  support_radius_ = 0.0;
  sup_alpha_ = 0.0;
  sup_beta_ = 0.0;
  alpha_lo_ = 0.0;
  alpha_hi_ = 0.0;
  bool any_alpha = false;
  auto note_alpha = [&](double lo, double hi) {
    alpha_lo_ = any_alpha ? std::min(alpha_lo_, lo) : lo;
    alpha_hi_ = any_alpha ? std::max(alpha_hi_, hi) : hi;
    any_alpha = true;
  };
  if (kind_ == PotentialKind::piecewise) {
    for (const auto& p : pieces_) {
      if (p.alpha == 0.0 && p.beta == 0.0) continue;
      support_radius_ = std::max({support_radius_, std::abs(p.lo), std::abs(p.hi)});
      sup_alpha_ = std::max(sup_alpha_, p.alpha);
      sup_beta_ = std::max(sup_beta_, p.beta);
      if (p.alpha > 0.0) note_alpha(p.lo, p.hi);
    }
  } else {
    const std::size_t n = nodes_.size();
    for (std::size_t i = 0; i < n && i < table_alpha_.size() && i < table_beta_.size(); ++i) {
      if (table_alpha_[i] == 0.0 && table_beta_[i] == 0.0) continue;
      // The interpolant is nonzero on the adjacent cells too.
      const double lo = nodes_[i == 0 ? 0 : i - 1];
      const double hi = nodes_[i + 1 < n ? i + 1 : i];
      support_radius_ = std::max({support_radius_, std::abs(lo), std::abs(hi)});
      sup_alpha_ = std::max(sup_alpha_, table_alpha_[i]);
      sup_beta_ = std::max(sup_beta_, table_beta_[i]);
      if (table_alpha_[i] > 0.0) note_alpha(lo, hi);
    }
  }
}

Rates PotentialSpec::at_coordinate(double s) const {
  if (kind_ == PotentialKind::piecewise) {
    for (const auto& p : pieces_) {
      if (s >= p.lo && s <= p.hi) return {p.alpha, p.beta};
    }
    return {};
  }
  if (nodes_.size() < 2 || s < nodes_.front() || s > nodes_.back()) return {};
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), s);
  std::size_t j = it == nodes_.end() ? nodes_.size() - 1 : static_cast<std::size_t>(it - nodes_.begin());
  const std::size_t i = j - 1;
  const double w = (s - nodes_[i]) / (nodes_[j] - nodes_[i]);
  return {(1 - w) * table_alpha_[i] + w * table_alpha_[j], (1 - w) * table_beta_[i] + w * table_beta_[j]};
}

Rates PotentialSpec::at(std::span<const double> x) const {
  if (dimension_ == 1) return at_coordinate(x[0]);
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  return at_coordinate(std::sqrt(r2));
}

Rates PotentialSpec::cell_average(double lo, double hi) const {
  if (hi <= lo) return at_coordinate(lo);
  const double width = hi - lo;
  if (kind_ == PotentialKind::piecewise) {
    Rates acc;
    for (const auto& p : pieces_) {
      const double overlap = std::min(hi, p.hi) - std::max(lo, p.lo);
      if (overlap <= 0.0) continue;
      acc.alpha += p.alpha * overlap;
      acc.beta += p.beta * overlap;
    }
    return {acc.alpha / width, acc.beta / width};
  }
  // Gauss-Legendre on each sub-interval between table nodes.
  std::vector<double> cuts{lo};
  for (double node : nodes_)
    if (node > lo && node < hi) cuts.push_back(node);
  cuts.push_back(hi);
  static constexpr double gx[2] = {-0.5773502691896257, 0.5773502691896257};
  Rates acc;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double mid = 0.5 * (cuts[c] + cuts[c + 1]);
    const double half = 0.5 * (cuts[c + 1] - cuts[c]);
    for (double g : gx) {
      const Rates r = at_coordinate(mid + half * g);
      acc.alpha += r.alpha * half;
      acc.beta += r.beta * half;
    }
  }
  return {acc.alpha / width, acc.beta / width};
}

PotentialSpec PotentialSpec::scaled_alpha(double factor) const {
  PotentialSpec copy = *this;
  for (auto& p : copy.pieces_) p.alpha *= factor;
  for (auto& a : copy.table_alpha_) a *= factor;
  copy.refresh();
  return copy;
}

Rates evaluate_potential(const PotentialSpec& spec, std::span<const double> x) { return spec.at(x); }

// ---------------------------------------------------------------------------
// Front schedule

double FrontSchedule::offset(double t) const {
  switch (mode) {
    case OffsetMode::constant:
      return b;
    case OffsetMode::log:
      return coef * std::log(t);
    case OffsetMode::power:
      return coef * std::pow(t, exponent);
  }
  return b;
}

double front_position(double lambda0, int dimension, double t) {
  return std::sqrt(lambda0 / 2.0) * t - (dimension - 1) / (2.0 * std::sqrt(2.0 * lambda0)) * std::log(t);
}

double front_distance(const FrontSchedule& front, double lambda0, double t) {
  if (!(t > 1.0)) throw ConfigError("front", "front center requires t > 1");
  if (!(lambda0 > 0.0)) throw ConfigError("front", "front center requires lambda0 > 0");
  const double a = front_position(lambda0, front.dimension(), t);
  const double b = front.offset(t);
  if (front.mode != OffsetMode::constant && b > a) {
    std::ostringstream os;
    os << "schedule violation: b(" << t << ") = " << b << " exceeds a(t) = " << a;
    throw ConfigError("front.b", os.str());
  }
  return a - b;
}

std::vector<double> front_center(const FrontSchedule& front, double lambda0, double t) {
  const double dist = front_distance(front, lambda0, t);
  std::vector<double> y(front.direction.size());
  std::transform(front.direction.begin(), front.direction.end(), y.begin(), [&](double u) { return dist * u; });
  return y;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_potential(const PotentialSpec& p, std::vector<Violation>& out) {
  if (p.dimension() < 1) out.push_back({"potential.dimension", "dimension must be positive"});
  if (p.kind() == PotentialKind::piecewise) {
    const auto& pieces = p.pieces();
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      const auto& q = pieces[i];
      const std::string field = "potential.pieces[" + std::to_string(i) + "]";
      if (!(q.lo <= q.hi)) out.push_back({field, "interval must satisfy lo <= hi"});
      if (!(q.alpha >= 0.0) || !(q.beta >= 0.0)) out.push_back({field, "rates must be nonnegative"});
      if (!std::isfinite(q.alpha) || !std::isfinite(q.beta) || !std::isfinite(q.lo) || !std::isfinite(q.hi))
        out.push_back({field, "values must be finite"});
      if (p.dimension() >= 2 && q.lo < 0.0) out.push_back({field, "radial shells need lo >= 0"});
      for (std::size_t j = 0; j < i; ++j) {
        const auto& r = pieces[j];
        if (std::min(q.hi, r.hi) > std::max(q.lo, r.lo))
          out.push_back({field, "overlaps pieces[" + std::to_string(j) + "]"});
      }
    }
  } else {
    const auto& n = p.nodes();
    if (n.size() < 2) out.push_back({"potential.table", "need at least two nodes"});
    if (p.table_alpha().size() != n.size() || p.table_beta().size() != n.size())
      out.push_back({"potential.table", "alpha/beta columns must match nodes"});
    for (std::size_t i = 1; i < n.size(); ++i)
      if (!(n[i] > n[i - 1])) {
        out.push_back({"potential.table", "nodes must be strictly increasing"});
        break;
      }
    for (double a : p.table_alpha())
      if (!(a >= 0.0)) out.push_back({"potential.table", "alpha must be nonnegative"});
    for (double b : p.table_beta())
      if (!(b >= 0.0)) out.push_back({"potential.table", "beta must be nonnegative"});
    if (p.dimension() >= 2 && !n.empty() && n.front() < 0.0)
      out.push_back({"potential.table", "radial table needs nodes >= 0"});
  }
}

}  // namespace

std::vector<Violation> check(const ExperimentConfig& c) {
  std::vector<Violation> out;
  check_potential(c.potential, out);
  const int d = c.potential.dimension();

  if (static_cast<int>(c.x0.size()) != d) out.push_back({"x0", "dimension mismatch with potential"});
  if (c.front.dimension() != d) out.push_back({"front.direction", "dimension mismatch with potential"});
  const double norm = std::sqrt(std::inner_product(c.front.direction.begin(), c.front.direction.end(),
                                                   c.front.direction.begin(), 0.0));
  if (!(std::abs(norm - 1.0) <= 1e-12)) out.push_back({"front.direction", "direction not unit"});
  if (c.front.mode == OffsetMode::power && !(c.front.exponent < 1.0))
    out.push_back({"front.exponent", "power offsets need exponent < 1"});
  if (c.front.mode != OffsetMode::constant && !(c.front.coef >= 0.0))
    out.push_back({"front.coef", "diverging offsets need coef >= 0"});

  if (c.checkpoints.empty()) out.push_back({"checkpoints", "need at least one checkpoint"});
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
    if (!(c.checkpoints[i] > 1.0)) out.push_back({"checkpoints", "front undefined for t <= 1"});
    if (i > 0 && !(c.checkpoints[i] > c.checkpoints[i - 1]))
      out.push_back({"checkpoints", "checkpoint times must be strictly increasing"});
  }
  if (c.k_max < 1) out.push_back({"k_max", "k_max must be at least 1"});
  if (!(c.ball_radius > 0.0)) out.push_back({"ball_radius", "ball radius must be positive"});

  const auto& g = c.grid;
  if (!(g.h > 0.0)) out.push_back({"grid.h", "spacing must be positive"});
  if (!(g.dt > 0.0)) out.push_back({"grid.dt", "time step must be positive"});
  if (!(g.epsilon > 0.0)) out.push_back({"grid.epsilon", "cone margin must be positive"});
  if (!(g.source_spacing > 0.0)) out.push_back({"grid.source_spacing", "must be positive"});
  if (g.t0 < 0.0) out.push_back({"grid.t0", "smoothing time must be nonnegative"});
  if (g.r_max < 0.0) out.push_back({"grid.r_max", "truncation must be nonnegative"});

  // Domain-of-dependence: the box must hold the front at the horizon plus 6 sqrt(T).
  if (!c.checkpoints.empty() && c.checkpoints.back() > 1.0) {
    const double horizon = c.checkpoints.back();
    const double lambda_upper = c.potential.sup_alpha();  // sup v <= sup alpha
    double reach = std::sqrt(lambda_upper / 2.0) * horizon;
    if (c.front.mode == OffsetMode::constant) reach += std::max(0.0, -c.front.b);
    for (double b : c.mc.b_values) reach = std::max(reach, std::sqrt(lambda_upper / 2.0) * horizon - b);
    reach += c.ball_radius;
    const double needed = reach + 6.0 * std::sqrt(horizon);
    if (!(g.half_width >= needed)) {
      std::ostringstream os;
      os << "domain too small: half width " << g.half_width << " < front reach " << reach
         << " + buffer " << 6.0 * std::sqrt(horizon);
      out.push_back({"grid.half_width", os.str()});
    }
  }
  if (!(g.half_width > c.potential.support_radius()))
    out.push_back({"grid.half_width", "domain too small: support not inside the box"});

  double gamma_lo = c.gamma_lo, gamma_hi = c.gamma_hi;
  if (gamma_lo == 0.0 && gamma_hi == 0.0) {
    gamma_lo = -c.potential.support_radius();
    gamma_hi = c.potential.support_radius();
  }
  if (!(gamma_lo <= gamma_hi)) out.push_back({"gamma", "compact set needs lo <= hi"});
  if (static_cast<int>(c.x0.size()) == d && d >= 1) {
    if (d == 1) {
      const double x = c.x0[0];
      const bool declared = !(c.gamma_lo == 0.0 && c.gamma_hi == 0.0);
      if (declared && (x < gamma_lo || x > gamma_hi)) out.push_back({"x0", "initial position outside Gamma"});
    } else {
      const double r = std::sqrt(std::inner_product(c.x0.begin(), c.x0.end(), c.x0.begin(), 0.0));
      if (c.gamma_hi != 0.0 && r > c.gamma_hi) out.push_back({"x0", "initial position outside Gamma"});
    }
    for (double xi : c.x0)
      if (!(std::abs(xi) < g.half_width)) out.push_back({"x0", "initial position outside the grid"});
  }

  if (c.mc.replicas < 1) out.push_back({"mc.replicas", "need at least one replica"});
  if (c.mc.max_particles < 1) out.push_back({"mc.max_particles", "cap must be positive"});
  if (c.mc.batches < 30) out.push_back({"mc.batches", "batch means need at least 30 batches"});
  return out;
}

ValidatedConfig validate(const ExperimentConfig& config) {
  auto violations = check(config);
  if (!violations.empty()) throw ConfigError(std::move(violations));
  ValidatedConfig v;
  v.config = config;
  if (v.config.gamma_lo == 0.0 && v.config.gamma_hi == 0.0) {
    const double L = config.potential.support_radius();
    v.config.gamma_lo = config.potential.dimension() == 1 ? std::min(-L, config.x0[0]) : 0.0;
    v.config.gamma_hi = config.potential.dimension() == 1 ? std::max(L, config.x0[0]) : L;
  }
  v.sup_alpha = config.potential.sup_alpha();
  v.sup_beta = config.potential.sup_beta();
  v.total_rate = config.potential.total_rate_bound();
  v.support_radius = config.potential.support_radius();
  v.lambda_upper = v.sup_alpha;
  v.horizon = config.checkpoints.back();
  v.front_bound = std::sqrt(v.lambda_upper / 2.0) * v.horizon;
  v.buffer = 6.0 * std::sqrt(v.horizon);
  v.smoothing_time = config.grid.smoothing_time();
  return v;
}

ExperimentConfig square_well_config(double alpha0, double half_width_support) {
  ExperimentConfig c;
  c.potential = PotentialSpec::piecewise(1, {{-half_width_support, half_width_support, alpha0, 0.0}});
  c.x0 = {0.0};
  c.front.direction = {1.0};
  c.front.b = 0.0;
  c.checkpoints = {8.0, 12.0};
  c.k_max = 3;
  return c;
}

}  // namespace bbmf
