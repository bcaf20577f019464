#include "riskgrid/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "riskgrid/errors.hpp"
#include "riskgrid/risk.hpp"

namespace riskgrid::trainer {

using nn::Matrix;
using nn::Tape;
using nn::Var;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::rrl_sm: return "rrl_sm";
    case Variant::r_mappo: return "r_mappo";
    case Variant::mappo: return "mappo";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "rrl_sm") return Variant::rrl_sm;
  if (s == "r_mappo") return Variant::r_mappo;
  if (s == "mappo") return Variant::mappo;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected rrl_sm, r_mappo or mappo)");
}

void ModelConfig::validate() const {
  nn::ModelDims{d_model, heads, hidden}.validate();
  if (quantiles < 1) throw ConfigError("model: quantiles must be >= 1");
  if (history < 0) throw ConfigError("model: history must be >= 0");
  if (!(kappa > 0)) throw ConfigError("model: kappa must be positive");
}

void TrainConfig::validate() const {
  if (episodes < 1) throw ConfigError("training: episodes must be >= 1");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("training: alpha must lie in (0, 1)");
  if (sync_interval < 1) throw ConfigError("training: sync_interval must be >= 1");
  if (episodes_per_update < 1) throw ConfigError("training: episodes_per_update must be >= 1");
  if (!(actor_lr > 0 && critic_lr > 0)) throw ConfigError("training: learning rates must be positive");
  if (!(grad_clip > 0)) throw ConfigError("training: grad_clip must be positive");
  if (!(reward_scale > 0)) throw ConfigError("training: reward_scale must be positive");
  if (!(log_std_init >= agent::kLogStdMin && log_std_init <= agent::kLogStdMax))
    throw ConfigError("training: log_std_init outside the clamp range");
  ppo.validate();
  model.validate();
}

namespace {

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

critic::CriticConfig critic_config(const TrainConfig& cfg) {
  critic::CriticConfig c;
  c.obs_size = env::kObservationSize;
  c.hidden = cfg.model.hidden;
  c.quantiles = cfg.variant == Variant::mappo ? 1 : cfg.model.quantiles;
  c.mixer = nn::ModelDims{cfg.model.d_model, cfg.model.heads, cfg.model.hidden};
  c.kappa = cfg.model.kappa;
  return c;
}

const TrainConfig& validated(const TrainConfig& cfg, const env::SystemParams& sys) {
  cfg.validate();
  sys.validate();
  return cfg;
}

}  // namespace

void MetricsLog::append(const EpisodeLog& row) {
  require(rows_.empty() || row.episode > rows_.back().episode, "MetricsLog: episode index must increase");
  rows_.push_back(row);
}

std::string MetricsLog::to_csv() const {
  std::string out = "episode,cum_reward,actor_loss,critic_loss,seconds\n";
  for (const auto& r : rows_)
    out += std::to_string(r.episode) + "," + fmt(r.cum_reward) + "," + fmt(r.actor_loss) + "," +
           fmt(r.critic_loss) + "," + fmt(r.seconds) + "\n";
  return out;
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << to_csv();
}

Learner::Learner(const env::SystemParams& system, const TrainConfig& cfg)
    : sys_(system),
      cfg_(validated(cfg, system)),
      actor_opt_(nn::AdamConfig{cfg.actor_lr}),
      critic_opt_(nn::AdamConfig{cfg.critic_lr}),
      sample_rng_(cfg.seed ^ 0x5a17c0ffee123457ULL) {
  std::mt19937_64 init_rng(cfg.seed);
  const int n = static_cast<int>(sys_.size());
  const auto d = cfg.model.d_model;
  if (cfg.variant == Variant::rrl_sm) {
    memory::MemoryConfig mc;
    mc.d_model = d;
    mc.obs_size = env::kObservationSize;
    mc.history = cfg.model.history;
    mc.detach_across_steps = cfg.model.detach_memory;
    memory_.emplace(actor_store_, n, mc, init_rng);
  } else {
    for (int i = 0; i < n; ++i)
      encoders_.push_back(nn::GRU::create(actor_store_, "enc." + std::to_string(i), env::kObservationSize, d,
                                          init_rng));
  }
  actor_ = agent::ActorPolicy(actor_store_, n, d, cfg.model.hidden, init_rng, cfg.log_std_init);
  critic_ = critic::CentralCritic(critic_store_, n, critic_config(cfg), init_rng);
  target_store_ = critic_store_;
}

Matrix Learner::decisions(const std::vector<Matrix>& history, int t, memory::GlobalMemorySpace* mem) {
  const int n = agents();
  const int h = cfg_.model.history;
  if (memory_) {
    std::vector<Matrix> windows;
    windows.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) windows.push_back(memory::history_window(history[static_cast<std::size_t>(i)], t, h));
    auto res = memory_->step_all(actor_store_, windows, *mem);
    *mem = std::move(res.next_memory);
    return res.decisions;
  }
  Matrix out(n, cfg_.model.d_model);
  for (int i = 0; i < n; ++i) {
    Tape tape;
    out.row(i) = decision(tape, i, history[static_cast<std::size_t>(i)], t, Matrix()).value();
  }
  return out;
}

Var Learner::decision(Tape& tape, int i, const Matrix& history, int t, const Matrix& mem) {
  const Matrix window = memory::history_window(history, t, cfg_.model.history);
  if (memory_) {
    Var m = t == 0 ? memory_->init_tokens(tape, actor_store_) : tape.constant(mem);
    return memory_->forward_agent(tape, actor_store_, i, m, window).decision;
  }
  std::vector<Var> inputs;
  inputs.reserve(static_cast<std::size_t>(window.rows()));
  for (Eigen::Index r = 0; r < window.rows(); ++r) inputs.push_back(tape.constant(window.row(r)));
  const auto& enc = encoders_[static_cast<std::size_t>(i)];
  return enc.run(tape, actor_store_, inputs, tape.constant(Matrix::Zero(1, enc.hidden)));
}

env::Trajectory Learner::rollout(const scenarios::ScenarioSet& set, std::pair<int, int> sc, agent::Mode mode,
                                 std::mt19937_64* rng, agent::RolloutBuffer* buffer) {
  require(mode == agent::Mode::mean || rng != nullptr, "rollout: sampling needs an rng");
  const int n = agents();
  const int T = sys_.horizon;
  auto [state, obs] = env::reset(sys_, sc, set);
  std::vector<Matrix> history(static_cast<std::size_t>(n), Matrix::Zero(T, env::kObservationSize));
  memory::GlobalMemorySpace mem;
  if (memory_) mem = memory_->init_memory(actor_store_);
  std::mt19937_64 unused;

  env::Trajectory traj;
  traj.horizon = T;
  traj.dt = sys_.dt;
  for (int t = 0; t < T; ++t) {
    agent::Transition tr;
    tr.t = t;
    tr.obs.resize(n, env::kObservationSize);
    for (int i = 0; i < n; ++i) {
      const auto f = env::features(obs[static_cast<std::size_t>(i)], sys_.mgs[static_cast<std::size_t>(i)], sys_.tariff);
      for (int k = 0; k < env::kObservationSize; ++k) tr.obs(i, k) = f[static_cast<std::size_t>(k)];
      history[static_cast<std::size_t>(i)].row(t) = tr.obs.row(i);
    }
    if (buffer && memory_) tr.memory = mem;
    const Matrix f = decisions(history, t, memory_ ? &mem : nullptr);

    tr.actions.resize(n, agent::kActionSize);
    tr.log_probs.resize(n);
    std::vector<env::Action> actions(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto s = actor_.act(actor_store_, i, f.row(i), mode, rng ? *rng : unused);
      tr.actions.row(i) = s.u;
      tr.log_probs(i) = s.log_prob;
      const auto raw = agent::to_physical(s.u, sys_.mgs[static_cast<std::size_t>(i)]);
      actions[static_cast<std::size_t>(i)] = env::project_action(raw, state, static_cast<std::size_t>(i), sys_);
    }
    auto [next, out] = env::step(state, actions, sys_, set);
    tr.reward = out.team_reward * cfg_.reward_scale;
    tr.done = t + 1 == T;
    traj.steps.push_back(std::move(out));
    if (buffer) buffer->push(std::move(tr));
    state = std::move(next);
    if (t + 1 < T) obs = env::observe(state, sys_, set);
  }
  return traj;
}

std::vector<Matrix> episode_states(const agent::RolloutBuffer& buffer) {
  std::vector<Matrix> out;
  const auto& steps = buffer.steps();
  for (const auto& [b, e] : buffer.episodes()) {
    const auto n = steps[b].obs.rows();
    const auto k = steps[b].obs.cols();
    Matrix s(static_cast<Eigen::Index>(e - b), n * k);
    for (std::size_t t = b; t < e; ++t)
      s.row(static_cast<Eigen::Index>(t - b)) = Eigen::Map<const nn::RowVector>(steps[t].obs.data(), n * k);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<double> Learner::risk_values(const Matrix& states) {
  const Matrix joint = critic_.joint_values(critic_store_, states);
  std::vector<double> v(static_cast<std::size_t>(joint.rows()));
  for (Eigen::Index t = 0; t < joint.rows(); ++t) v[static_cast<std::size_t>(t)] = critic::risk_value(joint.row(t), cfg_.alpha);
  return v;
}

double Learner::critic_update(const agent::RolloutBuffer& buffer) {
  const auto eps = buffer.episodes();
  const auto states = episode_states(buffer);
  std::vector<Matrix> targets;
  for (std::size_t e = 0; e < eps.size(); ++e) {
    std::vector<double> r;
    for (std::size_t k = eps[e].first; k < eps[e].second; ++k) r.push_back(buffer.steps()[k].reward);
    targets.push_back(critic::td_targets(r, critic_.joint_values(target_store_, states[e]), cfg_.ppo.gamma));
  }
  double last = 0;
  for (int epoch = 0; epoch < cfg_.ppo.epochs; ++epoch) {
    Tape tape;
    Var loss;
    for (std::size_t e = 0; e < eps.size(); ++e) {
      Var l = critic::critic_loss(critic_.joint(tape, critic_store_, states[e]), targets[e], cfg_.model.kappa);
      loss = e == 0 ? l : nn::add(loss, l);
    }
    loss = nn::scale(loss, 1.0 / static_cast<double>(eps.size()));
    last = loss.item();
    critic_store_.zero_grad();
    if (!std::isfinite(last)) throw NumericalAbort("critic loss is not finite (" + fmt(last) + ")");
    tape.backward(loss);
    if (!critic_store_.grads_finite()) throw NumericalAbort("critic gradient is not finite");
    critic_store_.clip_grad_norm(cfg_.grad_clip);
    critic_opt_.step(critic_store_);
    if (++critic_steps_ % cfg_.sync_interval == 0) target_store_.copy_values_from(critic_store_);
  }
  return last;
}

double Learner::actor_update(const agent::RolloutBuffer& buffer, const std::vector<double>& advantages) {
  const auto& steps = buffer.steps();
  const int n = agents();
  // Per-episode observation histories, indexed by transition.
  std::vector<std::vector<Matrix>> histories;
  std::vector<std::size_t> episode_of(steps.size());
  for (const auto& [b, e] : buffer.episodes()) {
    std::vector<Matrix> h(static_cast<std::size_t>(n), Matrix(static_cast<Eigen::Index>(e - b), env::kObservationSize));
    for (std::size_t k = b; k < e; ++k) {
      for (int i = 0; i < n; ++i) h[static_cast<std::size_t>(i)].row(static_cast<Eigen::Index>(k - b)) = steps[k].obs.row(i);
      episode_of[k] = histories.size();
    }
    histories.push_back(std::move(h));
  }

  const bool chained = memory_ && !memory_->config().detach_across_steps;
  std::vector<std::size_t> order(steps.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = cfg_.ppo.minibatch > 0 && !chained
                             ? std::min<std::size_t>(static_cast<std::size_t>(cfg_.ppo.minibatch), steps.size())
                             : steps.size();
  double last = 0;
  for (int epoch = 0; epoch < cfg_.ppo.epochs; ++epoch) {
    if (mb < steps.size()) std::shuffle(order.begin(), order.end(), sample_rng_);
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t stop = std::min(order.size(), start + mb);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
      const auto B = static_cast<Eigen::Index>(idx.size());
      Tape tape;
      const auto fs = batch_decisions(tape, buffer, histories, episode_of, idx);
      std::vector<Var> logps;
      Var entropy;
      Matrix old_lp(B * n, 1), adv(B * n, 1);
      for (int i = 0; i < n; ++i) {
        Matrix u(B, agent::kActionSize);
        for (Eigen::Index row = 0; row < B; ++row) {
          const auto& tr = steps[idx[static_cast<std::size_t>(row)]];
          u.row(row) = tr.actions.row(i);
          old_lp(i * B + row, 0) = tr.log_probs(i);
          adv(i * B + row, 0) = advantages[idx[static_cast<std::size_t>(row)]];
        }
        const auto& fi = fs[static_cast<std::size_t>(i)];
        Var f = fi.size() == 1 ? fi.front() : nn::concat_rows(fi);
        Var ls = actor_.log_std(tape, actor_store_, i);
        logps.push_back(agent::gaussian_log_prob(tape.constant(u), actor_.mean(tape, actor_store_, i, f), ls));
        Var ent = agent::gaussian_entropy(ls);
        entropy = i == 0 ? ent : nn::add(entropy, ent);
      }
      Var lp = logps.size() == 1 ? logps.front() : nn::concat_rows(logps);
      Var surrogate = agent::ppo_surrogate(lp, old_lp, adv, cfg_.ppo.clip);
      Var objective = nn::add(surrogate, nn::scale(entropy, cfg_.ppo.entropy_coef / static_cast<double>(n)));
      Var loss = nn::neg(objective);
      last = loss.item();
      actor_store_.zero_grad();
      if (!std::isfinite(last)) throw NumericalAbort("actor loss is not finite (" + fmt(last) + ")");
      tape.backward(loss);
      if (!actor_store_.grads_finite()) throw NumericalAbort("actor gradient is not finite");
      actor_store_.clip_grad_norm(cfg_.grad_clip);
      actor_opt_.step(actor_store_);
    }
  }
  return last;
}

std::vector<std::vector<Var>> Learner::batch_decisions(Tape& tape, const agent::RolloutBuffer& buffer,
                                                       const std::vector<std::vector<Matrix>>& histories,
                                                       const std::vector<std::size_t>& episode_of,
                                                       const std::vector<std::size_t>& idx) {
  const auto& steps = buffer.steps();
  const int n = agents();
  std::vector<std::vector<Var>> fs(static_cast<std::size_t>(n));
  if (memory_ && !memory_->config().detach_across_steps) {
    Var mem;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      require(idx[k] == k, "batch_decisions: chained memory needs whole episodes in order");
      const auto& tr = steps[k];
      if (tr.t == 0) mem = memory_->init_tokens(tape, actor_store_);
      std::vector<Var> tokens;
      const int h = cfg_.model.history;
      for (int i = 0; i < n; ++i) {
        const auto& hist = histories[episode_of[k]][static_cast<std::size_t>(i)];
        auto out = memory_->forward_agent(tape, actor_store_, i, mem, memory::history_window(hist, tr.t, h));
        fs[static_cast<std::size_t>(i)].push_back(out.decision);
        tokens.push_back(out.next_token);
      }
      mem = tokens.size() == 1 ? tokens.front() : nn::concat_rows(tokens);
    }
    return fs;
  }
  for (int i = 0; i < n; ++i)
    for (std::size_t k : idx) {
      const auto& tr = steps[k];
      fs[static_cast<std::size_t>(i)].push_back(
          decision(tape, i, histories[episode_of[k]][static_cast<std::size_t>(i)], tr.t, tr.memory));
    }
  return fs;
}

UpdateStats Learner::update(agent::RolloutBuffer& buffer) {
  const auto eps = buffer.episodes();
  require(!eps.empty() && eps.back().second == buffer.size(), "update: buffer must hold complete episodes");
  const auto states = episode_states(buffer);
  std::vector<double> advantages;
  advantages.reserve(buffer.size());
  for (std::size_t e = 0; e < eps.size(); ++e) {
    const auto v = risk_values(states[e]);
    std::vector<double> r;
    for (std::size_t k = eps[e].first; k < eps[e].second; ++k) {
      buffer.steps()[k].risk_value = v[k - eps[e].first];
      r.push_back(buffer.steps()[k].reward);
    }
    const auto a = agent::gae(r, v, cfg_.ppo.gamma, cfg_.ppo.lambda);
    advantages.insert(advantages.end(), a.begin(), a.end());
  }
  if (cfg_.ppo.normalize_advantages) agent::normalize(advantages);
  UpdateStats s;
  s.critic_loss = critic_update(buffer);
  s.actor_loss = actor_update(buffer, advantages);
  return s;
}

nlohmann::json Learner::header() const {
  return {{"variant", to_string(cfg_.variant)},
          {"agents", agents()},
          {"seed", cfg_.seed},
          {"alpha", cfg_.alpha},
          {"dims",
           {{"d_model", cfg_.model.d_model},
            {"heads", cfg_.model.heads},
            {"hidden", cfg_.model.hidden},
            {"quantiles", critic_.config().quantiles},
            {"history", cfg_.model.history},
            {"obs_size", env::kObservationSize}}},
          {"horizon", sys_.horizon}};
}

void Learner::save(const std::string& path, const nlohmann::json& extra) const {
  nn::ParamStore merged;
  for (std::size_t k = 0; k < actor_store_.size(); ++k) merged.add("actor/" + actor_store_.name(k), actor_store_.value(k));
  for (std::size_t k = 0; k < critic_store_.size(); ++k)
    merged.add("critic/" + critic_store_.name(k), critic_store_.value(k));
  auto meta = header();
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  merged.save_file(path, meta);
}

Learner Learner::load(const std::string& path, const env::SystemParams& system, const TrainConfig& cfg,
                      nlohmann::json* header_out) {
  nlohmann::json meta;
  const auto merged = nn::ParamStore::load_file(path, &meta);
  Learner l(system, cfg);
  const auto expect = l.header();
  for (const char* key : {"variant", "agents", "dims", "horizon"})
    if (!meta.contains(key) || meta[key] != expect[key])
      throw ConsistencyError(std::string("checkpoint does not match the configuration: field '") + key + "' differs");
  if (merged.size() != l.actor_store_.size() + l.critic_store_.size())
    throw ConsistencyError("checkpoint does not match the configuration: parameter count differs");
  auto fill = [&](nn::ParamStore& dst, const std::string& prefix) {
    for (std::size_t k = 0; k < dst.size(); ++k) {
      const std::string name = prefix + dst.name(k);
      if (!merged.contains(name)) throw ConsistencyError("checkpoint is missing parameter " + name);
      const auto& v = merged.value(name);
      if (v.rows() != dst.value(k).rows() || v.cols() != dst.value(k).cols())
        throw ConsistencyError("checkpoint parameter " + name + " has the wrong shape");
      dst.value(k) = v;
    }
  };
  fill(l.actor_store_, "actor/");
  fill(l.critic_store_, "critic/");
  l.target_store_.copy_values_from(l.critic_store_);
  if (header_out) *header_out = meta;
  return l;
}

ScenarioSampler::ScenarioSampler(const scenarios::ScenarioSet& set, std::uint64_t seed)
    : rng_(seed ^ 0x9e3779b97f4a7c15ULL),
      pv_(set.pv_probs.data(), set.pv_probs.data() + set.pv_probs.size()),
      load_(set.load_probs.data(), set.load_probs.data() + set.load_probs.size()) {}

std::pair<int, int> ScenarioSampler::next() {
  const int b = pv_(rng_);
  const int d = load_(rng_);
  return {b, d};
}

TrainResult train(Learner& learner, const scenarios::ScenarioSet& train_set, const std::string& abort_snapshot) {
  train_set.validate();
  const auto& cfg = learner.config();
  ScenarioSampler sampler(train_set, cfg.seed);
  std::mt19937_64 policy_rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  agent::RolloutBuffer buffer(static_cast<std::size_t>(cfg.episodes_per_update * learner.system().horizon));
  TrainResult res;
  UpdateStats last;
  const auto t0 = std::chrono::steady_clock::now();
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    const auto traj = learner.rollout(train_set, sampler.next(), agent::Mode::sample, &policy_rng, &buffer);
    double cum = 0;
    for (const auto& s : traj.steps) cum += s.team_reward;
    if (buffer.full()) {
      try {
        last = learner.update(buffer);
      } catch (const NumericalAbort& e) {
        if (!abort_snapshot.empty()) learner.save(abort_snapshot, {{"aborted_at_episode", ep}});
        throw NumericalAbort(std::string(e.what()) + " at episode " + std::to_string(ep));
      }
      buffer.clear();
      ++res.updates;
    }
    EpisodeLog row{ep, cum, last.actor_loss, last.critic_loss, 0.0};
    if (cfg.log_wall_clock)
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.metrics.append(row);
  }
  return res;
}

EvalReport report_from_trajectories(std::vector<ScenarioResult> results, const Eigen::VectorXd& pv_probs,
                                    const Eigen::VectorXd& load_probs, double alpha) {
  const auto B = pv_probs.size();
  const auto D = load_probs.size();
  require(static_cast<Eigen::Index>(results.size()) == B * D, "report: one result per scenario pair required");
  const double norm = pv_probs.sum() * load_probs.sum();
  EvalReport rep;
  rep.alpha = alpha;
  Eigen::MatrixXd shed(B, D);
  double served = 0;
  for (auto& r : results) {
    require(r.pv_id >= 0 && r.pv_id < B && r.load_id >= 0 && r.load_id < D, "report: scenario id out of range");
    r.prob = pv_probs(r.pv_id) * load_probs(r.load_id) / norm;
    r.cost = env::episode_cost(r.trajectory);
    r.shed_kwh = env::shed_energy(r.trajectory);
    r.served_kwh = env::served_energy(r.trajectory);
    shed(r.pv_id, r.load_id) = r.shed_kwh;
    rep.total_cost += r.prob * r.cost;
    served += r.prob * r.served_kwh;
  }
  rep.unit_cost = served > 0 ? rep.total_cost / served : 0.0;
  rep.risk_kwh = risk::cvar_alpha(risk::scenario_loss_table(shed, pv_probs, load_probs, 1.0), alpha);
  rep.scenarios = std::move(results);
  return rep;
}

EvalReport evaluate(Learner& learner, const scenarios::ScenarioSet& test_set, double alpha, int threads) {
  test_set.validate();
  const int B = static_cast<int>(test_set.pv_count());
  const int D = static_cast<int>(test_set.load_count());
  std::vector<ScenarioResult> results(static_cast<std::size_t>(B * D));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int k = next++; k < B * D; k = next++) {
      try {
        auto& r = results[static_cast<std::size_t>(k)];
        r.pv_id = k / D;
        r.load_id = k % D;
        r.trajectory = learner.rollout(test_set, {r.pv_id, r.load_id}, agent::Mode::mean, nullptr, nullptr);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, std::max(1, B * D));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return report_from_trajectories(std::move(results), test_set.pv_probs, test_set.load_probs, alpha);
}

namespace {

nlohmann::json to_json(const env::Trajectory& traj) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : traj.steps) {
    nlohmann::json mgs = nlohmann::json::array();
    for (const auto& o : s.mg)
      mgs.push_back({{"pv", o.pv},
                     {"load", o.load},
                     {"p_mt", o.p_mt},
                     {"p_c", o.p_c},
                     {"p_d", o.p_d},
                     {"p_gb", o.p_gb},
                     {"p_gs", o.p_gs},
                     {"p_tl", o.p_tl},
                     {"p_curt", o.p_curt},
                     {"soc", o.soc},
                     {"reward", o.reward}});
    steps.push_back({{"t", s.t},
                     {"team_reward", s.team_reward},
                     {"cost",
                      {{"mt", s.cost.mt_cost},
                       {"buy", s.cost.buy_cost},
                       {"sell", s.cost.sell_revenue},
                       {"shed", s.cost.shed_cost}}},
                     {"mg", mgs}});
  }
  return {{"horizon", traj.horizon}, {"dt", traj.dt}, {"steps", steps}};
}

env::Trajectory trajectory_from_json(const nlohmann::json& j) {
  env::Trajectory traj;
  traj.horizon = j.at("horizon").get<int>();
  traj.dt = j.at("dt").get<double>();
  for (const auto& s : j.at("steps")) {
    env::StepOutcome out;
    out.t = s.at("t").get<int>();
    out.team_reward = s.at("team_reward").get<double>();
    const auto& c = s.at("cost");
    out.cost = {c.at("mt").get<double>(), c.at("buy").get<double>(), c.at("sell").get<double>(),
                c.at("shed").get<double>()};
    for (const auto& m : s.at("mg")) {
      env::MgOutcome o;
      o.pv = m.at("pv").get<double>();
      o.load = m.at("load").get<double>();
      o.p_mt = m.at("p_mt").get<double>();
      o.p_c = m.at("p_c").get<double>();
      o.p_d = m.at("p_d").get<double>();
      o.p_gb = m.at("p_gb").get<double>();
      o.p_gs = m.at("p_gs").get<double>();
      o.p_tl = m.at("p_tl").get<double>();
      o.p_curt = m.at("p_curt").get<double>();
      o.soc = m.at("soc").get<double>();
      o.reward = m.at("reward").get<double>();
      out.mg.push_back(o);
    }
    traj.steps.push_back(std::move(out));
  }
  return traj;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json scen = nlohmann::json::array();
  for (const auto& r : report.scenarios)
    scen.push_back({{"pv_id", r.pv_id},
                    {"load_id", r.load_id},
                    {"prob", r.prob},
                    {"cost", r.cost},
                    {"shed_kwh", r.shed_kwh},
                    {"served_kwh", r.served_kwh},
                    {"trajectory", to_json(r.trajectory)}});
  return {{"alpha", report.alpha},
          {"total_cost", report.total_cost},
          {"unit_cost", report.unit_cost},
          {"risk_kwh", report.risk_kwh},
          {"scenarios", scen}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport rep;
    rep.alpha = j.at("alpha").get<double>();
    rep.total_cost = j.at("total_cost").get<double>();
    rep.unit_cost = j.at("unit_cost").get<double>();
    rep.risk_kwh = j.at("risk_kwh").get<double>();
    for (const auto& s : j.at("scenarios")) {
      ScenarioResult r;
      r.pv_id = s.at("pv_id").get<int>();
      r.load_id = s.at("load_id").get<int>();
      r.prob = s.at("prob").get<double>();
      r.cost = s.at("cost").get<double>();
      r.shed_kwh = s.at("shed_kwh").get<double>();
      r.served_kwh = s.at("served_kwh").get<double>();
      r.trajectory = trajectory_from_json(s.at("trajectory"));
      rep.scenarios.push_back(std::move(r));
    }
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  }
}

std::string dispatch_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "pv_id,load_id,t,mg,pv,load,p_mt,p_es,soc,p_gb,p_gs,p_tl\n";
  for (const auto& r : report.scenarios)
    for (const auto& s : r.trajectory.steps)
      for (std::size_t i = 0; i < s.mg.size(); ++i) {
        const auto& o = s.mg[i];
        out << r.pv_id << ',' << r.load_id << ',' << s.t << ',' << i << ',' << fmt(o.pv) << ',' << fmt(o.load)
            << ',' << fmt(o.p_mt) << ',' << fmt(o.p_d - o.p_c) << ',' << fmt(o.soc) << ',' << fmt(o.p_gb) << ','
            << fmt(o.p_gs) << ',' << fmt(o.p_tl) << '\n';
      }
  return out.str();
}

}  // namespace riskgrid::trainer
