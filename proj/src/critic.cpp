#include "riskgrid/critic.hpp"

#include "riskgrid/errors.hpp"

namespace riskgrid::critic {

void CriticConfig::validate() const {
  if (obs_size <= 0 || hidden <= 0) throw ConfigError("critic: sizes must be positive");
  if (quantiles < 1) throw ConfigError("critic: at least one quantile required");
  if (!(kappa > 0)) throw ConfigError("critic: kappa must be positive");
  mixer.validate();
}

QuantileCritic QuantileCritic::create(ParamStore& store, const std::string& prefix, const CriticConfig& cfg,
                                      std::mt19937_64& rng) {
  QuantileCritic c;
  c.l1 = nn::Linear::create(store, prefix + ".l1", cfg.obs_size, cfg.hidden, rng);
  c.l2 = nn::Linear::create(store, prefix + ".l2", cfg.hidden, cfg.hidden, rng);
  c.out = nn::Linear::create(store, prefix + ".out", cfg.hidden, cfg.quantiles, rng);
  return c;
}

Var QuantileCritic::operator()(Tape& tape, ParamStore& store, Var obs) const {
  Var h = nn::tanh(l1(tape, store, obs));
  h = nn::tanh(l2(tape, store, h));
  return out(tape, store, h);
}

AttentionMixer AttentionMixer::create(ParamStore& store, const std::string& prefix, int n_agents,
                                      const CriticConfig& cfg, std::mt19937_64& rng) {
  AttentionMixer m;
  const Eigen::Index d = cfg.mixer.d_model;
  m.agents = n_agents;
  m.obs_size = cfg.obs_size;
  m.gru = nn::GRU::create(store, prefix + ".gru", n_agents * cfg.obs_size, d, rng);
  m.obs_proj = nn::Linear::create(store, prefix + ".obs_proj", cfg.obs_size, d, rng);
  m.attn = nn::MultiHead::create(store, prefix + ".attn", cfg.mixer, rng);
  m.score = nn::Linear::create(store, prefix + ".score", d, d, rng);
  m.u = store.add_uniform(prefix + ".u", d, 1, d, rng);
  return m;
}

Var AttentionMixer::step_weights(Tape& tape, ParamStore& store, Var hidden, Var state) const {
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(agents));
  for (int i = 0; i < agents; ++i) {
    Var o = nn::slice_cols(state, i * obs_size, obs_size);
    rows.push_back(nn::add(hidden, obs_proj(tape, store, o)));
  }
  Var x = rows.size() == 1 ? rows.front() : nn::concat_rows(rows);
  Var c = attn(tape, store, x);
  Var e = nn::matmul(nn::tanh(score(tape, store, c)), tape.param(store, u));
  return nn::softmax_rows(nn::transpose(e));
}

Var AttentionMixer::weights(Tape& tape, ParamStore& store, Var states) const {
  require(states.rows() >= 1, "mixer: empty state history");
  require(states.cols() == agents * obs_size, "mixer: state width must be N * obs_size");
  std::vector<Var> inputs;
  inputs.reserve(static_cast<std::size_t>(states.rows()));
  for (Eigen::Index t = 0; t < states.rows(); ++t) inputs.push_back(nn::row(states, t));
  Var h0 = tape.constant(Matrix::Zero(1, gru.hidden));
  const auto hs = gru.sequence(tape, store, inputs, h0);
  std::vector<Var> ks;
  ks.reserve(hs.size());
  for (std::size_t t = 0; t < hs.size(); ++t) ks.push_back(step_weights(tape, store, hs[t], inputs[t]));
  return ks.size() == 1 ? ks.front() : nn::concat_rows(ks);
}

CentralCritic::CentralCritic(ParamStore& store, int n_agents, const CriticConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  require(n_agents >= 1, "CentralCritic: at least one agent required");
  cfg.validate();
  for (int i = 0; i < n_agents; ++i)
    critics_.push_back(QuantileCritic::create(store, "critic." + std::to_string(i), cfg, rng));
  mixer_ = AttentionMixer::create(store, "mixer", n_agents, cfg, rng);
}

Var CentralCritic::joint(Tape& tape, ParamStore& store, const Matrix& states) const {
  require(states.cols() == agents() * cfg_.obs_size, "critic: state width must be N * obs_size");
  Var s = tape.constant(states);
  Var k = mixer_.weights(tape, store, s);
  Var ones = tape.constant(Matrix::Ones(1, cfg_.quantiles));
  Var total;
  for (int i = 0; i < agents(); ++i) {
    Var atoms = critics_[static_cast<std::size_t>(i)](tape, store, nn::slice_cols(s, i * cfg_.obs_size, cfg_.obs_size));
    Var term = nn::mul(nn::matmul(nn::slice_cols(k, i, 1), ones), atoms);
    total = i == 0 ? term : nn::add(total, term);
  }
  return total;
}

Matrix CentralCritic::joint_values(ParamStore& store, const Matrix& states) const {
  Tape tape;
  return joint(tape, store, states).value();
}

Matrix td_targets(std::span<const double> rewards, const Matrix& target_joint, double gamma) {
  const auto T = static_cast<Eigen::Index>(rewards.size());
  require(target_joint.rows() == T, "td_targets: one target row per reward required");
  Matrix out(T, target_joint.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    const double r = rewards[static_cast<std::size_t>(t)];
    if (t + 1 < T)
      out.row(t) = (r + gamma * target_joint.row(t + 1).array()).matrix();
    else
      out.row(t).setConstant(r);
  }
  return out;
}

Var critic_loss(Var joint, const Matrix& targets, double kappa) {
  const Eigen::RowVectorXd levels = risk::quantile_levels(joint.cols());
  return nn::quantile_huber(joint, targets, std::span<const double>(levels.data(), levels.size()), kappa);
}

}  // namespace riskgrid::critic
