// SPDX-License-Identifier: Apache-2.0
//
// Staged pipeline eigen -> kernel -> moments -> simulate -> compare with an
// on-disk cache keyed by content hashes of the config sections each stage reads.
//
// Output directory layout:
//   eigen.json psi.csv            spectral stage
//   kernel.json kernel.csv        density slices (r, z, rho1) and manifest
//   moments.json Gk.csv           limit moments and G_k on the grid
//   simulate.json [replicas.csv]  estimator summary (raw rows are size-guarded)
//   report.json report.csv ...    comparison report
//   cache/<stage>-<key>/          cached payloads and artifacts
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbmf/config_io.hpp"
#include "bbmf/mcsim.hpp"
#include "bbmf/model.hpp"
#include "bbmf/report.hpp"
#include "bbmf/spectral.hpp"

namespace bbmf {

inline constexpr const char* kLibraryVersion = "bbmf 0.1.0";

void to_json(nlohmann::json& j, const Grid1D& g);
void from_json(const nlohmann::json& j, Grid1D& g);
void to_json(nlohmann::json& j, const SpectralData& s);
void from_json(const nlohmann::json& j, SpectralData& s);
void to_json(nlohmann::json& j, const Estimate& e);
void from_json(const nlohmann::json& j, Estimate& e);
void to_json(nlohmann::json& j, const EstimatorSummary& s);

struct PipelineOptions {
  std::filesystem::path out = "bbmf-out";
  bool use_cache = true;
  bool deterministic_reduce = false;
  std::size_t raw_row_limit = 200000;  ///< replicas x checkpoints above this skip replicas.csv
  TolerancePolicy policy;
  std::function<void(const std::string&)> log;
};

struct StageRecord {
  std::string name;
  std::string key;
  bool cache_hit = false;
};

/// Offsets behind the front observed at every checkpoint: the configured
/// schedule first, then each constant offset from mc.b_values.
struct Ball {
  double b = 0.0;
  double distance = 0.0;  ///< |y(t)| along the direction
  std::vector<double> center;
  bool scheduled = true;
};
std::vector<std::vector<Ball>> observation_balls(const ValidatedConfig& config, double lambda0);

/// Replica setup for a validated config: thinning rates, psi for the martingale,
/// ball centres, front positions and presence probes (offsets -6 .. 3 from a(t)).
SimulationSetup make_simulation(const ValidatedConfig& config, const SpectralData& spectral);

class Pipeline {
 public:
  Pipeline(ValidatedConfig config, PipelineOptions options = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const ValidatedConfig& config() const noexcept { return config_; }
  const PipelineOptions& options() const noexcept { return options_; }

  /// Stage payloads (computed or loaded from the cache on first use).
  const nlohmann::json& eigen();
  const nlohmann::json& kernel();
  const nlohmann::json& moments();
  const nlohmann::json& simulate();
  const SpectralData& spectral();

  ComparisonReport compare();

  /// Copies each finished stage's files into the output directory.
  std::vector<std::filesystem::path> export_artifacts(const std::vector<std::string>& stages);

  std::string stage_key(const std::string& stage);
  const std::vector<StageRecord>& stages() const noexcept { return records_; }

 private:
  struct Stage {
    std::string key;
    nlohmann::json payload;
    std::filesystem::path dir;
    bool ready = false;
  };
  using Producer = std::function<nlohmann::json(const std::filesystem::path& dir)>;
  const nlohmann::json& run_stage(const std::string& name, const Producer& produce);
  nlohmann::json key_material(const std::string& stage);
  void note(const std::string& line) const;

  nlohmann::json produce_eigen(const std::filesystem::path& dir);
  nlohmann::json produce_kernel(const std::filesystem::path& dir);
  nlohmann::json produce_moments(const std::filesystem::path& dir);
  nlohmann::json produce_simulate(const std::filesystem::path& dir);

  ValidatedConfig config_;
  PipelineOptions options_;
  std::map<std::string, Stage> stages_;
  std::vector<StageRecord> records_;
  std::unique_ptr<SpectralData> spectral_;
};

/// INI file, a JSON config (ExperimentConfig or ValidatedConfig), or a report
/// whose provenance block carries the config. Overrides apply to INI files and
/// on top of JSON configs.
ExperimentConfig load_any_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// Full pipeline; emits the report into options.out.
ComparisonReport run_pipeline(const std::filesystem::path& config_path, PipelineOptions options = {},
                              const Overrides& overrides = {});

}  // namespace bbmf
