#include "riskgrid/config.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "riskgrid/errors.hpp"

namespace riskgrid::config {

using nlohmann::json;

void ScenarioConfig::validate() const {
  if (ensemble < 1) throw ConfigError("scenarios.ensemble must be >= 1");
  if (pv_count < 2 || load_count < 2) throw ConfigError("scenarios: need at least 2 representatives per family");
  if (pv_count > ensemble || load_count > ensemble)
    throw ConfigError("scenarios: more representatives than ensemble members");
  if (test_pv < 1 || test_pv >= pv_count || test_load < 1 || test_load >= load_count)
    throw ConfigError("scenarios: test counts must leave at least one training representative");
  if (kmeans_max_iters < 1 || !(kmeans_tol >= 0)) throw ConfigError("scenarios: bad k-means settings");
  if (!(pv_peak_kw >= 0 && load_base_kw >= 0 && load_evening_peak_kw >= 0))
    throw ConfigError("scenarios: profile magnitudes must be non-negative");
  pv_noise.validate();
  load_noise.validate();
}

void RunConfig::validate() const {
  system.validate();
  scenarios.validate();
  risk.validate();
  training.validate();
  if (training.alpha != risk.alpha) throw ConfigError("training alpha must equal risk.alpha");
  if (output.empty()) throw ConfigError("output directory must not be empty");
}

RunConfig desk_config() {
  RunConfig c;
  env::MicrogridParams a;
  env::MicrogridParams b;
  b.pv_scale = 1.2;
  b.load_scale = 0.8;
  c.system.mgs = {a, b};
  c.system.horizon = 24;
  c.system.grid_buy_max = 500;
  c.system.grid_sell_max = 900;
  c.scenarios.pv_count = 25;
  c.scenarios.load_count = 25;
  c.scenarios.test_pv = 5;
  c.scenarios.test_load = 5;
  c.scenarios.pv_noise = {0.15, 0.0, 0.2, 0.0, 350.0};
  c.scenarios.load_noise = {0.05, 0.0, 0.12, 0.0, 2000.0};
  c.training.episodes = 500;
  // Tuned for the 500-episode budget; the library defaults stay at the published values.
  c.training.actor_lr = 3e-4;
  c.training.ppo.entropy_coef = 0.0;
  return c;
}

RunConfig paper_scale_config() {
  RunConfig c = desk_config();
  env::MicrogridParams mg;
  c.system.mgs = {mg, mg, mg};
  c.system.horizon = 168;
  c.system.grid_buy_max = 900;
  c.system.grid_sell_max = 900;
  c.scenarios.pv_count = 25;
  c.scenarios.load_count = 25;
  c.scenarios.test_pv = 5;
  c.scenarios.test_load = 5;
  c.training.episodes = 1000;
  c.training.actor_lr = trainer::TrainConfig{}.actor_lr;
  c.training.ppo.entropy_coef = agent::PPOConfig{}.entropy_coef;
  return c;
}

namespace {

// Reads known keys from one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(at(key) + " must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(at(key) + " must be an integer");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(at(key) + " must be non-negative");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(at(key) + " must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(at(key) + " must be a string");
      }
      out = v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(at(key) + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("unknown key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_microgrid(const json& j, const std::string& path, env::MicrogridParams& mg) {
  Reader r(j, path);
  r.get("pv_max", mg.pv_max);
  r.get("pv_min", mg.pv_min);
  r.get("mt_max", mg.mt_max);
  r.get("mt_min", mg.mt_min);
  r.get("ramp_up", mg.ramp_up);
  r.get("ramp_down", mg.ramp_down);
  r.get("ess_charge_max", mg.ess_charge_max);
  r.get("ess_discharge_max", mg.ess_discharge_max);
  r.get("ess_capacity", mg.ess_capacity);
  r.get("eta_c", mg.eta_c);
  r.get("eta_d", mg.eta_d);
  r.get("soc_min", mg.soc_min);
  r.get("soc_max", mg.soc_max);
  r.get("soc_init", mg.soc_init);
  r.get("mt_cost", mg.mt_cost);
  r.get("shed_penalty", mg.shed_penalty);
  r.get("pv_scale", mg.pv_scale);
  r.get("load_scale", mg.load_scale);
  r.get("load_ref", mg.load_ref);
  r.finish();
}

json microgrid_json(const env::MicrogridParams& mg) {
  return {{"pv_max", mg.pv_max},
          {"pv_min", mg.pv_min},
          {"mt_max", mg.mt_max},
          {"mt_min", mg.mt_min},
          {"ramp_up", mg.ramp_up},
          {"ramp_down", mg.ramp_down},
          {"ess_charge_max", mg.ess_charge_max},
          {"ess_discharge_max", mg.ess_discharge_max},
          {"ess_capacity", mg.ess_capacity},
          {"eta_c", mg.eta_c},
          {"eta_d", mg.eta_d},
          {"soc_min", mg.soc_min},
          {"soc_max", mg.soc_max},
          {"soc_init", mg.soc_init},
          {"mt_cost", mg.mt_cost},
          {"shed_penalty", mg.shed_penalty},
          {"pv_scale", mg.pv_scale},
          {"load_scale", mg.load_scale},
          {"load_ref", mg.load_ref}};
}

void read_noise(const json& j, const std::string& path, scenarios::NoiseSpec& n) {
  Reader r(j, path);
  r.get("multiplicative_std", n.multiplicative_std);
  r.get("additive_std", n.additive_std);
  r.get("level_std", n.level_std);
  r.get("clamp_min", n.clamp_min);
  r.get("clamp_max", n.clamp_max);
  r.finish();
}

json noise_json(const scenarios::NoiseSpec& n) {
  return {{"multiplicative_std", n.multiplicative_std},
          {"additive_std", n.additive_std},
          {"level_std", n.level_std},
          {"clamp_min", n.clamp_min},
          {"clamp_max", n.clamp_max}};
}

void read_system(const json& j, env::SystemParams& s) {
  Reader r(j, "system");
  if (const json* mgs = r.sub("microgrids")) {
    if (!mgs->is_array() || mgs->empty()) throw ConfigError("system.microgrids must be a non-empty array");
    // Each entry overlays the first default microgrid.
    const env::MicrogridParams proto = s.mgs.empty() ? env::MicrogridParams{} : s.mgs.front();
    std::vector<env::MicrogridParams> out;
    for (std::size_t i = 0; i < mgs->size(); ++i) {
      env::MicrogridParams mg = i < s.mgs.size() ? s.mgs[i] : proto;
      read_microgrid((*mgs)[i], "system.microgrids[" + std::to_string(i) + "]", mg);
      out.push_back(mg);
    }
    s.mgs = std::move(out);
  }
  r.get("grid_buy_max", s.grid_buy_max);
  r.get("grid_sell_max", s.grid_sell_max);
  r.get("dt", s.dt);
  r.get("horizon", s.horizon);
  if (const json* t = r.sub("tariff")) {
    Reader tr(*t, "system.tariff");
    if (const json* bp = tr.sub("buy_price")) {
      if (!bp->is_array() || bp->size() != 24) throw ConfigError("system.tariff.buy_price must list 24 hourly prices");
      for (std::size_t h = 0; h < 24; ++h) {
        if (!(*bp)[h].is_number()) throw ConfigError("system.tariff.buy_price entries must be numbers");
        s.tariff.buy_price[h] = (*bp)[h].get<double>();
      }
    }
    tr.get("sell_ratio", s.tariff.sell_ratio);
    tr.finish();
  }
  r.finish();
}

void read_scenarios(const json& j, ScenarioConfig& c) {
  Reader r(j, "scenarios");
  r.get("ensemble", c.ensemble);
  r.get("pv_count", c.pv_count);
  r.get("load_count", c.load_count);
  r.get("test_pv", c.test_pv);
  r.get("test_load", c.test_load);
  r.get("seed", c.seed);
  r.get("kmeans_max_iters", c.kmeans_max_iters);
  r.get("kmeans_tol", c.kmeans_tol);
  r.get("pv_peak_kw", c.pv_peak_kw);
  r.get("load_base_kw", c.load_base_kw);
  r.get("load_evening_peak_kw", c.load_evening_peak_kw);
  if (const json* n = r.sub("pv_noise")) read_noise(*n, "scenarios.pv_noise", c.pv_noise);
  if (const json* n = r.sub("load_noise")) read_noise(*n, "scenarios.load_noise", c.load_noise);
  r.get("pv_csv", c.pv_csv);
  r.get("load_csv", c.load_csv);
  r.get("csv_header", c.csv_header);
  r.finish();
}

void read_training(const json& j, trainer::TrainConfig& t) {
  Reader r(j, "training");
  std::string variant = trainer::to_string(t.variant);
  r.get("variant", variant);
  t.variant = trainer::parse_variant(variant);
  r.get("episodes", t.episodes);
  r.get("seed", t.seed);
  r.get("sync_interval", t.sync_interval);
  r.get("episodes_per_update", t.episodes_per_update);
  r.get("actor_lr", t.actor_lr);
  r.get("critic_lr", t.critic_lr);
  r.get("grad_clip", t.grad_clip);
  r.get("reward_scale", t.reward_scale);
  r.get("log_std_init", t.log_std_init);
  r.get("log_wall_clock", t.log_wall_clock);
  if (const json* p = r.sub("ppo")) {
    Reader pr(*p, "training.ppo");
    pr.get("clip", t.ppo.clip);
    pr.get("lambda", t.ppo.lambda);
    pr.get("gamma", t.ppo.gamma);
    pr.get("epochs", t.ppo.epochs);
    pr.get("minibatch", t.ppo.minibatch);
    pr.get("entropy_coef", t.ppo.entropy_coef);
    pr.get("normalize_advantages", t.ppo.normalize_advantages);
    pr.finish();
  }
  if (const json* m = r.sub("model")) {
    Reader mr(*m, "training.model");
    mr.get("d_model", t.model.d_model);
    mr.get("heads", t.model.heads);
    mr.get("hidden", t.model.hidden);
    mr.get("quantiles", t.model.quantiles);
    mr.get("history", t.model.history);
    mr.get("kappa", t.model.kappa);
    mr.get("detach_memory", t.model.detach_memory);
    mr.finish();
  }
  r.finish();
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

}  // namespace

RunConfig parse_config(const json& j, const RunConfig& base) {
  RunConfig c = base;
  Reader r(j, "");
  if (const json* s = r.sub("system")) read_system(*s, c.system);
  if (const json* s = r.sub("scenarios")) read_scenarios(*s, c.scenarios);
  if (const json* s = r.sub("risk")) {
    Reader rr(*s, "risk");
    rr.get("alpha", c.risk.alpha);
    rr.get("sigma", c.risk.sigma);
    rr.finish();
  }
  if (const json* s = r.sub("training")) read_training(*s, c.training);
  r.get("output", c.output);
  r.finish();
  c.training.alpha = c.risk.alpha;
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j, base);
}

json to_json(const RunConfig& c) {
  json mgs = json::array();
  for (const auto& mg : c.system.mgs) mgs.push_back(microgrid_json(mg));
  const auto& t = c.training;
  return {
      {"system",
       {{"microgrids", mgs},
        {"grid_buy_max", c.system.grid_buy_max},
        {"grid_sell_max", c.system.grid_sell_max},
        {"dt", c.system.dt},
        {"horizon", c.system.horizon},
        {"tariff", {{"buy_price", c.system.tariff.buy_price}, {"sell_ratio", c.system.tariff.sell_ratio}}}}},
      {"scenarios",
       {{"ensemble", c.scenarios.ensemble},
        {"pv_count", c.scenarios.pv_count},
        {"load_count", c.scenarios.load_count},
        {"test_pv", c.scenarios.test_pv},
        {"test_load", c.scenarios.test_load},
        {"seed", c.scenarios.seed},
        {"kmeans_max_iters", c.scenarios.kmeans_max_iters},
        {"kmeans_tol", c.scenarios.kmeans_tol},
        {"pv_peak_kw", c.scenarios.pv_peak_kw},
        {"load_base_kw", c.scenarios.load_base_kw},
        {"load_evening_peak_kw", c.scenarios.load_evening_peak_kw},
        {"pv_noise", noise_json(c.scenarios.pv_noise)},
        {"load_noise", noise_json(c.scenarios.load_noise)},
        {"pv_csv", c.scenarios.pv_csv},
        {"load_csv", c.scenarios.load_csv},
        {"csv_header", c.scenarios.csv_header}}},
      {"risk", {{"alpha", c.risk.alpha}, {"sigma", c.risk.sigma}}},
      {"training",
       {{"variant", trainer::to_string(t.variant)},
        {"episodes", t.episodes},
        {"seed", t.seed},
        {"sync_interval", t.sync_interval},
        {"episodes_per_update", t.episodes_per_update},
        {"actor_lr", t.actor_lr},
        {"critic_lr", t.critic_lr},
        {"grad_clip", t.grad_clip},
        {"reward_scale", t.reward_scale},
        {"log_std_init", t.log_std_init},
        {"log_wall_clock", t.log_wall_clock},
        {"ppo",
         {{"clip", t.ppo.clip},
          {"lambda", t.ppo.lambda},
          {"gamma", t.ppo.gamma},
          {"epochs", t.ppo.epochs},
          {"minibatch", t.ppo.minibatch},
          {"entropy_coef", t.ppo.entropy_coef},
          {"normalize_advantages", t.ppo.normalize_advantages}}},
        {"model",
         {{"d_model", t.model.d_model},
          {"heads", t.model.heads},
          {"hidden", t.model.hidden},
          {"quantiles", t.model.quantiles},
          {"history", t.model.history},
          {"kappa", t.model.kappa},
          {"detach_memory", t.model.detach_memory}}}}},
      {"output", c.output}};
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

std::vector<int> spread_ids(int count, int picks) {
  require(picks >= 0 && picks <= count, "spread_ids: bad pick count");
  std::vector<int> ids;
  for (int j = 0; j < picks; ++j)
    ids.push_back(static_cast<int>((static_cast<long long>(2 * j + 1) * count) / (2LL * picks)));
  return ids;
}

namespace {

// Reduces one family and reorders representatives by total energy.
void reduce_family(const scenarios::ProfileMatrix& ensemble, int k, std::uint64_t seed, const ScenarioConfig& c,
                   scenarios::ProfileMatrix& profiles, Eigen::VectorXd& probs) {
  const auto km = scenarios::reduce_kmeans(ensemble, k, seed, c.kmeans_max_iters, c.kmeans_tol);
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return km.centroids.row(a).sum() < km.centroids.row(b).sum(); });
  profiles.resize(k, km.centroids.cols());
  probs.resize(k);
  for (int r = 0; r < k; ++r) {
    profiles.row(r) = km.centroids.row(order[static_cast<std::size_t>(r)]);
    probs(r) = km.probs(order[static_cast<std::size_t>(r)]);
  }
}

std::vector<int> complement(int count, const std::vector<int>& taken) {
  std::vector<int> out;
  for (int i = 0; i < count; ++i)
    if (std::find(taken.begin(), taken.end(), i) == taken.end()) out.push_back(i);
  return out;
}

}  // namespace

BuiltScenarios build_scenarios(const RunConfig& cfg) {
  const auto& c = cfg.scenarios;
  const int T = cfg.system.horizon;
  scenarios::ProfileMatrix pv_ens, load_ens;
  if (!c.pv_csv.empty())
    pv_ens = scenarios::load_profiles_csv(c.pv_csv, c.csv_header);
  else
    pv_ens = scenarios::generate_ensemble(scenarios::default_pv_shape(T, c.pv_peak_kw), c.pv_noise, c.ensemble, c.seed);
  if (!c.load_csv.empty())
    load_ens = scenarios::load_profiles_csv(c.load_csv, c.csv_header);
  else
    load_ens = scenarios::generate_ensemble(
        scenarios::default_load_shape(T, c.load_base_kw, c.load_evening_peak_kw), c.load_noise, c.ensemble,
        c.seed + 1);
  if (pv_ens.cols() < T || load_ens.cols() < T) throw ConfigError("scenario profiles are shorter than the horizon");
  if (pv_ens.rows() < c.pv_count || load_ens.rows() < c.load_count)
    throw ConfigError("scenario ensembles have fewer rows than requested representatives");

  BuiltScenarios out;
  reduce_family(pv_ens.leftCols(T), c.pv_count, c.seed + 2, c, out.set.pv, out.set.pv_probs);
  reduce_family(load_ens.leftCols(T), c.load_count, c.seed + 3, c, out.set.load, out.set.load_probs);
  out.set.validate();
  out.split.test_pv = spread_ids(c.pv_count, c.test_pv);
  out.split.test_load = spread_ids(c.load_count, c.test_load);
  out.split.train_pv = complement(c.pv_count, out.split.test_pv);
  out.split.train_load = complement(c.load_count, out.split.test_load);
  out.split.validate(out.set);
  return out;
}

json to_json(const BuiltScenarios& s, const std::string& hash) {
  return {{"config_hash", hash}, {"set", scenarios::to_json(s.set)}, {"split", scenarios::to_json(s.split)}};
}

BuiltScenarios built_scenarios_from_json(const json& j, std::string* hash) {
  try {
    BuiltScenarios s;
    s.set = scenarios::scenario_set_from_json(j.at("set"));
    s.split = scenarios::scenario_split_from_json(j.at("split"));
    s.split.validate(s.set);
    if (hash) *hash = j.at("config_hash").get<std::string>();
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario file: ") + e.what());
  }
}

}  // namespace riskgrid::config
