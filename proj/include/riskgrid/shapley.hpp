#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskgrid/risk.hpp"
#include "riskgrid/trainer.hpp"

// Cost allocation among microgrids after training. Coalitions are bitmasks
// over agents (bit i = agent i); JSON keys list 1-based members, e.g. "1,3".
namespace riskgrid::shapley {

using Coalition = std::uint32_t;

class CharacteristicTable {
 public:
  explicit CharacteristicTable(int n_agents);

  int agents() const { return n_; }
  Coalition grand() const { return (Coalition{1} << n_) - 1; }
  void set(Coalition s, double value);
  bool has(Coalition s) const;
  /// Y(S); Y(empty) is 0 by definition.
  double value(Coalition s) const;
  bool complete() const;

 private:
  int n_ = 0;
  std::vector<std::optional<double>> values_;
};

/// Exact enumeration: Psi_i = sum_{S not containing i} |S|!(n-|S|-1)!/n! (Y(S+i) - Y(S)).
/// Weight numerators are integers; the division by n! happens once per agent.
std::vector<double> shapley_allocate(const CharacteristicTable& table);

std::string coalition_key(Coalition s);
Coalition parse_coalition_key(const std::string& key, int n_agents);

nlohmann::json to_json(const CharacteristicTable& table);
CharacteristicTable table_from_json(const nlohmann::json& j);

/// Keeps only the microgrids in `s`, in index order; grid limits unchanged.
env::SystemParams restrict_system(const env::SystemParams& base, Coalition s);

/// Trains the configured variant for `cfg.episodes` episodes on the
/// sub-system and returns expected test cost + sigma * CVaR_alpha(shed energy).
double coalition_value(Coalition s, const env::SystemParams& base, const scenarios::ScenarioSet& train_set,
                       const scenarios::ScenarioSet& test_set, const trainer::TrainConfig& cfg,
                       const risk::RiskConfig& risk_cfg, int threads = 1);

}  // namespace riskgrid::shapley
