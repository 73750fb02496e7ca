// SPDX-License-Identifier: Apache-2.0
#include "bbmf/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bbmf {

using nlohmann::json;

namespace {

std::string describe(const CellKey& key) {
  std::ostringstream os;
  os << "(t = " << key.t << ", k = " << key.k << ")";
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

bool within_tolerance(double theory, const Estimate& empirical, const TolerancePolicy& policy) {
  const double band = std::max(policy.rel_tol * std::abs(theory), policy.z_tol * empirical.se);
  return std::abs(empirical.mean - theory) <= band;
}

std::vector<Verdict> compare(const std::map<CellKey, double>& theory, const std::map<CellKey, Estimate>& empirical,
                             const TolerancePolicy& policy) {
  for (const auto& [key, _] : theory)
    if (!empirical.count(key)) throw std::invalid_argument("key mismatch: no empirical value for " + describe(key));
  for (const auto& [key, _] : empirical)
    if (!theory.count(key)) throw std::invalid_argument("key mismatch: no theory value for " + describe(key));
  std::vector<Verdict> out;
  for (const auto& [key, th] : theory) {
    const Estimate& e = empirical.at(key);
    Verdict v;
    v.t = key.t;
    v.k = key.k;
    v.theory = th;
    v.empirical = e.mean;
    v.se = e.se;
    v.z = e.se > 0.0 ? (e.mean - th) / e.se : 0.0;
    v.pass = within_tolerance(th, e, policy);
    out.push_back(v);
  }
  return out;
}

bool ComparisonReport::all_pass() const {
  auto ok = [](const ReportRow& r) { return r.pass; };
  return std::all_of(rows.begin(), rows.end(), ok) && std::all_of(sweep.begin(), sweep.end(), ok);
}

void to_json(json& j, const ReportRow& r) {
  j = json{{"t", r.t},
           {"k", r.k},
           {"b", r.b},
           {"center", r.center},
           {"branch", r.branch},
           {"m1", r.m1},
           {"m1_asymptotic", r.m1_asymptotic},
           {"theory", r.theory},
           {"finite_time", r.finite_time},
           {"empirical", r.empirical},
           {"stderr", r.se},
           {"z", r.z},
           {"pass", r.pass}};
}

void from_json(const json& j, ReportRow& r) {
  j.at("t").get_to(r.t);
  j.at("k").get_to(r.k);
  j.at("b").get_to(r.b);
  j.at("center").get_to(r.center);
  j.at("branch").get_to(r.branch);
  j.at("m1").get_to(r.m1);
  j.at("m1_asymptotic").get_to(r.m1_asymptotic);
  j.at("theory").get_to(r.theory);
  j.at("finite_time").get_to(r.finite_time);
  j.at("empirical").get_to(r.empirical);
  j.at("stderr").get_to(r.se);
  j.at("z").get_to(r.z);
  j.at("pass").get_to(r.pass);
}

void to_json(json& j, const ComparisonReport& r) {
  j = json{{"policy", {{"rel_tol", r.policy.rel_tol}, {"z_tol", r.policy.z_tol}}},
           {"rows", r.rows},
           {"sweep", r.sweep},
           {"all_pass", r.all_pass()},
           {"diagnostics", r.diagnostics},
           {"provenance", r.provenance}};
}

void from_json(const json& j, ComparisonReport& r) {
  j.at("policy").at("rel_tol").get_to(r.policy.rel_tol);
  j.at("policy").at("z_tol").get_to(r.policy.z_tol);
  j.at("rows").get_to(r.rows);
  j.at("sweep").get_to(r.sweep);
  r.diagnostics = j.value("diagnostics", json::object());
  r.provenance = j.value("provenance", json::object());
}

std::string canonical_json(const ComparisonReport& report) { return json(report).dump(2) + "\n"; }

ComparisonReport parse_report(const std::string& text) { return json::parse(text).get<ComparisonReport>(); }

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "t,k,b,center,branch,m1,m1_asymptotic,theory,finite_time,empirical,stderr,z,pass\n";
  for (const auto& r : rows)
    os << number(r.t) << ',' << r.k << ',' << number(r.b) << ',' << number(r.center) << ',' << r.branch << ','
       << number(r.m1) << ',' << number(r.m1_asymptotic) << ',' << number(r.theory) << ',' << number(r.finite_time)
       << ',' << number(r.empirical) << ',' << number(r.se) << ',' << number(r.z) << ',' << (r.pass ? 1 : 0) << '\n';
  return os.str();
}

std::string plot_data(const std::vector<ReportRow>& rows, int k) {
  std::vector<const ReportRow*> sel;
  for (const auto& r : rows)
    if (r.k == k) sel.push_back(&r);
  std::stable_sort(sel.begin(), sel.end(), [](auto* a, auto* b) { return a->t < b->t; });
  std::ostringstream os;
  os << "# t mean stderr theory finite_time  (order k = " << k << ")\n";
  for (const auto* r : sel)
    os << number(r->t) << ' ' << number(r->empirical) << ' ' << number(r->se) << ' ' << number(r->theory) << ' '
       << number(r->finite_time) << '\n';
  return os.str();
}

std::vector<std::filesystem::path> emit(const ComparisonReport& report, const std::filesystem::path& dir,
                                        const EmitOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    written.push_back(dir / name);
  };
  if (options.json) put("report.json", canonical_json(report));
  if (options.csv) {
    put("report.csv", report_csv(report.rows));
    if (!report.sweep.empty()) put("sweep.csv", report_csv(report.sweep));
  }
  if (options.plots) {
    std::set<int> orders;
    for (const auto& r : report.rows) orders.insert(r.k);
    for (int k : orders) put("eta_k" + std::to_string(k) + ".dat", plot_data(report.rows, k));
  }
  return written;
}

}  // namespace bbmf
