#include "riskgrid/shapley.hpp"

#include <bit>
#include <sstream>

#include "riskgrid/errors.hpp"

namespace riskgrid::shapley {

CharacteristicTable::CharacteristicTable(int n_agents) : n_(n_agents) {
  require(n_agents >= 1 && n_agents <= 20, "CharacteristicTable: agent count must lie in [1, 20]");
  values_.resize(std::size_t{1} << n_agents);
  values_[0] = 0.0;
}

void CharacteristicTable::set(Coalition s, double value) {
  require(s <= grand(), "CharacteristicTable: coalition outside the agent set");
  require(s != 0 || value == 0.0, "CharacteristicTable: the empty coalition has value 0");
  values_[s] = value;
}

bool CharacteristicTable::has(Coalition s) const { return s <= grand() && values_[s].has_value(); }

double CharacteristicTable::value(Coalition s) const {
  require(has(s), "CharacteristicTable: missing coalition value");
  return *values_[s];
}

bool CharacteristicTable::complete() const {
  for (const auto& v : values_)
    if (!v) return false;
  return true;
}

std::vector<double> shapley_allocate(const CharacteristicTable& table) {
  const int n = table.agents();
  std::vector<double> factorial(static_cast<std::size_t>(n) + 1, 1.0);
  for (int k = 1; k <= n; ++k) factorial[static_cast<std::size_t>(k)] = factorial[static_cast<std::size_t>(k - 1)] * k;
  std::vector<double> psi(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const Coalition bit = Coalition{1} << i;
    double acc = 0;
    for (Coalition s = 0; s <= table.grand(); ++s) {
      if (s & bit) continue;
      const int size = std::popcount(s);
      const double weight = factorial[static_cast<std::size_t>(size)] * factorial[static_cast<std::size_t>(n - size - 1)];
      acc += weight * (table.value(s | bit) - table.value(s));
    }
    psi[static_cast<std::size_t>(i)] = acc / factorial[static_cast<std::size_t>(n)];
  }
  return psi;
}

std::string coalition_key(Coalition s) {
  std::string out;
  for (int i = 0; s >> i; ++i)
    if ((s >> i) & 1U) out += (out.empty() ? "" : ",") + std::to_string(i + 1);
  return out;
}

Coalition parse_coalition_key(const std::string& key, int n_agents) {
  Coalition s = 0;
  if (key.empty()) return s;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, ',')) {
    int member = 0;
    try {
      std::size_t used = 0;
      member = std::stoi(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ParseError("coalition key '" + key + "' is not a comma-separated member list");
    }
    if (member < 1 || member > n_agents) throw ParseError("coalition key '" + key + "' names an unknown agent");
    const Coalition bit = Coalition{1} << (member - 1);
    if (s & bit) throw ParseError("coalition key '" + key + "' repeats a member");
    s |= bit;
  }
  return s;
}

nlohmann::json to_json(const CharacteristicTable& table) {
  nlohmann::json values = nlohmann::json::object();
  for (Coalition s = 1; s <= table.grand(); ++s)
    if (table.has(s)) values[coalition_key(s)] = table.value(s);
  return {{"agents", table.agents()}, {"values", values}};
}

CharacteristicTable table_from_json(const nlohmann::json& j) {
  try {
    CharacteristicTable table(j.at("agents").get<int>());
    for (const auto& [k, v] : j.at("values").items()) {
      const auto s = parse_coalition_key(k, table.agents());
      if (s == 0 && v.get<double>() != 0.0) throw ParseError("the empty coalition must have value 0");
      table.set(s, v.get<double>());
    }
    if (!table.complete()) throw ParseError("characteristic table does not list every coalition");
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("characteristic table: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ParseError(std::string("characteristic table: ") + e.what());
  }
}

env::SystemParams restrict_system(const env::SystemParams& base, Coalition s) {
  require(s != 0, "restrict_system: empty coalition");
  env::SystemParams sub = base;
  sub.mgs.clear();
  for (std::size_t i = 0; i < base.mgs.size(); ++i)
    if ((s >> i) & 1U) sub.mgs.push_back(base.mgs[i]);
  require(!sub.mgs.empty() && static_cast<std::size_t>(std::bit_width(s)) <= base.mgs.size(),
          "restrict_system: coalition names unknown microgrids");
  return sub;
}

double coalition_value(Coalition s, const env::SystemParams& base, const scenarios::ScenarioSet& train_set,
                       const scenarios::ScenarioSet& test_set, const trainer::TrainConfig& cfg,
                       const risk::RiskConfig& risk_cfg, int threads) {
  if (s == 0) return 0.0;
  require(cfg.episodes >= 1, "coalition_value: training budget must be positive");
  const auto sub = restrict_system(base, s);
  trainer::Learner learner(sub, cfg);
  trainer::train(learner, train_set);
  const auto rep = trainer::evaluate(learner, test_set, risk_cfg.alpha, threads);
  return rep.total_cost + risk_cfg.sigma * rep.risk_kwh;
}

}  // namespace riskgrid::shapley
