#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskgrid/agent.hpp"
#include "riskgrid/critic.hpp"
#include "riskgrid/env.hpp"
#include "riskgrid/memory.hpp"
#include "riskgrid/scenarios.hpp"

// Training loop, algorithm variants and held-out evaluation.
//   rrl_sm   shared memory + quantile critic with risk-sensitive baseline
//   r_mappo  per-agent GRU encoders over private history + the same critic
//   mappo    r_mappo with single-atom (expected value) critics
namespace riskgrid::trainer {

enum class Variant { rrl_sm, r_mappo, mappo };

std::string to_string(Variant v);
Variant parse_variant(std::string_view s);

struct ModelConfig {
  Eigen::Index d_model = 64;
  Eigen::Index heads = 4;
  Eigen::Index hidden = 64;
  Eigen::Index quantiles = 32;
  int history = 8;
  double kappa = 10.0;
  /// Cut the shared-memory gradient at every step instead of once per episode.
  bool detach_memory = false;

  void validate() const;
};

struct TrainConfig {
  Variant variant = Variant::rrl_sm;
  int episodes = 500;
  std::uint64_t seed = 1;
  double alpha = 0.9;
  agent::PPOConfig ppo{};
  int sync_interval = 10;  ///< critic optimizer steps between target copies
  int episodes_per_update = 1;
  double actor_lr = 1e-4;
  double critic_lr = 5e-4;
  double grad_clip = 10.0;
  /// Team rewards are multiplied by this before entering the learner.
  double reward_scale = 1e-3;
  double log_std_init = -0.5;
  ModelConfig model{};
  bool log_wall_clock = false;

  void validate() const;
};

struct EpisodeLog {
  int episode = 0;
  double cum_reward = 0;  ///< unscaled team reward summed over the episode
  double actor_loss = 0;
  double critic_loss = 0;
  double seconds = 0;
};

class MetricsLog {
 public:
  void append(const EpisodeLog& row);
  const std::vector<EpisodeLog>& rows() const { return rows_; }
  std::string to_csv() const;
  void write_csv(const std::string& path) const;

 private:
  std::vector<EpisodeLog> rows_;
};

struct UpdateStats {
  double actor_loss = 0;
  double critic_loss = 0;
};

/// All learnable state of one run: encoders, actors, critic and its frozen copy.
class Learner {
 public:
  Learner(const env::SystemParams& system, const TrainConfig& cfg);

  const TrainConfig& config() const { return cfg_; }
  const env::SystemParams& system() const { return sys_; }
  int agents() const { return static_cast<int>(sys_.size()); }
  bool has_shared_memory() const { return memory_.has_value(); }

  nn::ParamStore& actor_store() { return actor_store_; }
  nn::ParamStore& critic_store() { return critic_store_; }
  nn::ParamStore& target_store() { return target_store_; }
  const critic::CentralCritic& critic() const { return critic_; }

  /// Plays one episode on scenario pair `sc`. With a buffer the transitions
  /// are stored for the next update. Safe to call concurrently in mean mode
  /// without a buffer.
  env::Trajectory rollout(const scenarios::ScenarioSet& set, std::pair<int, int> sc, agent::Mode mode,
                          std::mt19937_64* rng, agent::RolloutBuffer* buffer);

  /// Risk values, advantages, critic update, actor update.
  UpdateStats update(agent::RolloutBuffer& buffer);

  /// Risk-sensitive value of every step of an episode (T global states).
  std::vector<double> risk_values(const nn::Matrix& states);

  std::int64_t critic_steps() const { return critic_steps_; }

  nlohmann::json header() const;
  void save(const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  /// Rebuilds the layout from (system, cfg) and loads values; throws
  /// ConsistencyError if the stored layout or header disagrees.
  static Learner load(const std::string& path, const env::SystemParams& system, const TrainConfig& cfg,
                      nlohmann::json* header = nullptr);

 private:
  /// Decision vectors of all agents at step t during a rollout.
  nn::Matrix decisions(const std::vector<nn::Matrix>& history, int t, memory::GlobalMemorySpace* memory);
  /// Differentiable decision vector of agent i at step t.
  nn::Var decision(nn::Tape& tape, int agent, const nn::Matrix& history, int t, const nn::Matrix& memory);
  /// Decision vectors for the transitions `idx` of a buffer, one list per
  /// agent in idx order. Without detaching, idx must cover whole episodes in
  /// order so the memory chain can be rebuilt on the tape.
  std::vector<std::vector<nn::Var>> batch_decisions(nn::Tape& tape, const agent::RolloutBuffer& buffer,
                                                    const std::vector<std::vector<nn::Matrix>>& histories,
                                                    const std::vector<std::size_t>& episode_of,
                                                    const std::vector<std::size_t>& idx);
  double actor_update(const agent::RolloutBuffer& buffer, const std::vector<double>& advantages);
  double critic_update(const agent::RolloutBuffer& buffer);

  env::SystemParams sys_;
  TrainConfig cfg_;
  nn::ParamStore actor_store_;
  nn::ParamStore critic_store_;
  nn::ParamStore target_store_;
  std::optional<memory::SharedMemory> memory_;
  std::vector<nn::GRU> encoders_;
  agent::ActorPolicy actor_;
  critic::CentralCritic critic_;
  nn::Adam actor_opt_;
  nn::Adam critic_opt_;
  std::mt19937_64 sample_rng_;
  std::int64_t critic_steps_ = 0;
};

/// Splits a buffer's observations into per-episode global-state matrices.
std::vector<nn::Matrix> episode_states(const agent::RolloutBuffer& buffer);

/// Scenario pairs drawn by probability with a stream that depends only on the seed.
class ScenarioSampler {
 public:
  ScenarioSampler(const scenarios::ScenarioSet& set, std::uint64_t seed);
  std::pair<int, int> next();

 private:
  std::mt19937_64 rng_;
  std::discrete_distribution<int> pv_;
  std::discrete_distribution<int> load_;
};

struct TrainResult {
  MetricsLog metrics;
  std::int64_t updates = 0;
};

/// Runs `cfg.episodes` episodes on the training scenarios. If
/// `abort_snapshot` is non-empty, a NaN abort first writes the current
/// parameters there.
TrainResult train(Learner& learner, const scenarios::ScenarioSet& train_set,
                  const std::string& abort_snapshot = "");

struct ScenarioResult {
  int pv_id = 0;
  int load_id = 0;
  double prob = 0;
  double cost = 0;
  double shed_kwh = 0;
  double served_kwh = 0;
  env::Trajectory trajectory;
};

struct EvalReport {
  double alpha = 0.9;
  double total_cost = 0;  ///< probability-weighted episode cost
  double unit_cost = 0;   ///< total_cost / expected served energy
  double risk_kwh = 0;    ///< CVaR_alpha of shed energy over the scenario grid
  std::vector<ScenarioResult> scenarios;  ///< row-major over (pv, load)
};

/// Recomputes every derived field from per-scenario trajectories.
EvalReport report_from_trajectories(std::vector<ScenarioResult> results, const Eigen::VectorXd& pv_probs,
                                    const Eigen::VectorXd& load_probs, double alpha);

/// Mean-action rollout on every (pv, load) pair of `test_set`, fanned out
/// over up to `threads` workers; results do not depend on the thread count.
EvalReport evaluate(Learner& learner, const scenarios::ScenarioSet& test_set, double alpha, int threads = 1);

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);
/// One row per (scenario, step, microgrid) with the dispatch decision.
std::string dispatch_csv(const EvalReport& report);

}  // namespace riskgrid::trainer
