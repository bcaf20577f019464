#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

#include "riskgrid/env.hpp"
#include "riskgrid/risk.hpp"
#include "riskgrid/scenarios.hpp"
#include "riskgrid/trainer.hpp"

// Run configuration: one JSON document for system, scenarios, risk and
// training. Every key is optional (defaults fill the gaps) but unknown keys
// are rejected.
namespace riskgrid::config {

struct ScenarioConfig {
  int ensemble = 1000;  ///< Monte-Carlo profiles per family before reduction
  int pv_count = 24;    ///< representatives after k-means
  int load_count = 24;
  int test_pv = 6;  ///< held out for evaluation
  int test_load = 6;
  std::uint64_t seed = 7;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;
  double pv_peak_kw = 350;
  scenarios::NoiseSpec pv_noise{};
  double load_base_kw = 200;
  double load_evening_peak_kw = 450;
  scenarios::NoiseSpec load_noise{};
  std::string pv_csv;  ///< optional historical ensembles replacing the synthetic ones
  std::string load_csv;
  bool csv_header = false;

  void validate() const;
};

struct RunConfig {
  env::SystemParams system;
  ScenarioConfig scenarios;
  risk::RiskConfig risk;
  trainer::TrainConfig training;  ///< training.alpha mirrors risk.alpha
  std::string output = "runs/default";

  void validate() const;
};

/// Desk-scale experiment: two microgrids, T = 24, binding aggregate import limit.
RunConfig desk_config();
/// Full-size parameter set: three microgrids, T = 168, 20 x 20 scenarios.
RunConfig paper_scale_config();

/// Overlays `j` onto `base`; throws ConfigError naming the offending key.
RunConfig parse_config(const nlohmann::json& j, const RunConfig& base = desk_config());
RunConfig load_config(const std::string& path, const RunConfig& base = desk_config());
nlohmann::json to_json(const RunConfig& cfg);

/// FNV-1a 64 over the canonical dump of everything except the output path.
std::string config_hash(const RunConfig& cfg);

struct BuiltScenarios {
  scenarios::ScenarioSet set;
  scenarios::ScenarioSplit split;

  scenarios::ScenarioSet train() const { return set.subset(split.train_pv, split.train_load); }
  scenarios::ScenarioSet test() const { return set.subset(split.test_pv, split.test_load); }
};

/// Ensembles (synthetic or CSV), k-means reduction and the train/test split.
/// Representatives are ordered by total energy; test ids are spread evenly
/// over that order.
BuiltScenarios build_scenarios(const RunConfig& cfg);

/// Evenly spread held-out ids among `count` ordered representatives.
std::vector<int> spread_ids(int count, int picks);

nlohmann::json to_json(const BuiltScenarios& s, const std::string& config_hash);
BuiltScenarios built_scenarios_from_json(const nlohmann::json& j, std::string* config_hash = nullptr);

}  // namespace riskgrid::config
