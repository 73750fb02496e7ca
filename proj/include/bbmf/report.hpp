// SPDX-License-Identifier: Apache-2.0
//
// Theory-versus-simulation comparison report: verdicts, canonical JSON, CSV
// tables and gnuplot-style data files.
#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbmf/mcsim.hpp"

namespace bbmf {

struct TolerancePolicy {
  double rel_tol = 0.05;
  double z_tol = 3.0;
  bool operator==(const TolerancePolicy&) const = default;
};

struct CellKey {
  double t = 0.0;
  int k = 1;
  auto operator<=>(const CellKey&) const = default;
};

struct Verdict {
  double t = 0.0;
  int k = 1;
  double theory = 0.0;
  double empirical = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool pass = false;
};

/// Pass iff |empirical - theory| <= max(rel_tol |theory|, z_tol se).
bool within_tolerance(double theory, const Estimate& empirical, const TolerancePolicy& policy);

/// One verdict per key. Throws std::invalid_argument("key mismatch ...") when
/// the two maps do not have the same keys.
std::vector<Verdict> compare(const std::map<CellKey, double>& theory, const std::map<CellKey, Estimate>& empirical,
                             const TolerancePolicy& policy = {});

struct ReportRow {
  double t = 0.0;
  int k = 1;
  double b = 0.0;  ///< offset behind the front at time t
  double center = 0.0;  ///< signed distance of the ball centre along the direction
  std::string branch;  ///< "front" (bounded offset) or "interior" (offset -> infinity)
  double m1 = 0.0;  ///< PDE first moment used to normalize eta
  double m1_asymptotic = 0.0;
  double theory = 0.0;
  double finite_time = 0.0;  ///< E eta^k at time t from the moment PDEs
  double empirical = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool pass = false;
  bool operator==(const ReportRow&) const = default;
};

struct ComparisonReport {
  TolerancePolicy policy;
  std::vector<ReportRow> rows;  ///< the configured front schedule, checkpoints x orders
  std::vector<ReportRow> sweep;  ///< extra constant offsets
  nlohmann::json diagnostics = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();

  bool all_pass() const;
  bool operator==(const ComparisonReport&) const = default;
};

void to_json(nlohmann::json& j, const ReportRow& r);
void from_json(const nlohmann::json& j, ReportRow& r);
void to_json(nlohmann::json& j, const ComparisonReport& r);
void from_json(const nlohmann::json& j, ComparisonReport& r);

/// Sorted keys, two-space indent, trailing newline.
std::string canonical_json(const ComparisonReport& report);
ComparisonReport parse_report(const std::string& text);

/// One CSV line per row of `rows`, with a header.
std::string report_csv(const std::vector<ReportRow>& rows);

/// Plot data for order k: t, mean, se, theory, finite-time prediction, sorted by t.
std::string plot_data(const std::vector<ReportRow>& rows, int k);

struct EmitOptions {
  bool json = true;
  bool csv = true;
  bool plots = true;
};

/// Writes report.json, report.csv (and sweep.csv when present) and eta_k<k>.dat
/// into `dir`. Returns the written paths. Throws std::runtime_error on I/O failure.
std::vector<std::filesystem::path> emit(const ComparisonReport& report, const std::filesystem::path& dir,
                                        const EmitOptions& options = {});

}  // namespace bbmf
