// SPDX-License-Identifier: Apache-2.0
//
// Key-value configuration files and JSON provenance for experiment configs.
//
// File schema (INI style, one key per line):
//
//   [potential]   dimension, kind = piecewise|tabulated,
//                 pieces = "lo hi alpha beta | lo hi alpha beta ...",
//                 table = path to CSV (coordinate,alpha,beta), relative to the file
//   [experiment]  x0, gamma = "lo,hi", ball_radius, checkpoints, k_max
//   [front]       direction, mode = constant|log|power, b, coef, exponent
//   [grid]        half_width, h, dt, t0, epsilon, r_max, source_spacing
//   [mc]          replicas, seed, max_particles, batches, b_values
//
// Any key may be overridden from the environment as BBMF_<SECTION>_<KEY>,
// e.g. BBMF_MC_REPLICAS=200.
#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>

#include <json.hpp>

#include "bbmf/model.hpp"

namespace bbmf {

using Overrides = std::map<std::string, std::string>;  // "section.key" -> value

/// Collects BBMF_<SECTION>_<KEY> variables from the process environment.
Overrides environment_overrides(const std::string& prefix = "BBMF_");

ExperimentConfig parse_config(std::istream& in, const Overrides& overrides = {},
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});
/// Overrides on top of an existing config. Any potential.* key replaces the
/// whole potential, as in a fresh file.
ExperimentConfig apply_overrides(const ExperimentConfig& config, const Overrides& overrides);

void to_json(nlohmann::json& j, const PotentialSpec& p);
void from_json(const nlohmann::json& j, PotentialSpec& p);
void to_json(nlohmann::json& j, const FrontSchedule& f);
void from_json(const nlohmann::json& j, FrontSchedule& f);
void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);
void to_json(nlohmann::json& j, const McSpec& m);
void from_json(const nlohmann::json& j, McSpec& m);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const ValidatedConfig& v);
void from_json(const nlohmann::json& j, ValidatedConfig& v);

/// 64-bit FNV-1a of the canonical JSON dump; used as a stage cache key.
std::uint64_t content_hash(const nlohmann::json& j);
std::string hex_hash(std::uint64_t h);

}  // namespace bbmf
