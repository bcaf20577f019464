#include "riskgrid/memory.hpp"

#include <string>

#include "riskgrid/errors.hpp"

namespace riskgrid::memory {

SharedMemory::SharedMemory(ParamStore& store, int n_agents, const MemoryConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
  require(n_agents >= 1, "SharedMemory: at least one agent required");
  require(cfg.history >= 0 && cfg.d_model > 0 && cfg.obs_size > 0, "SharedMemory: bad config");
  const Eigen::Index d = cfg.d_model;
  for (int i = 0; i < n_agents; ++i) {
    const std::string p = "mem." + std::to_string(i);
    AgentParams a;
    a.embed = nn::Linear::create(store, p + ".embed", cfg.obs_size, d, rng);
    a.q_self = nn::Linear::create(store, p + ".q_self", d, d, rng);
    a.k_self = nn::Linear::create(store, p + ".k_self", d, d, rng);
    a.v_self = nn::Linear::create(store, p + ".v_self", d, d, rng);
    a.q_cross = nn::Linear::create(store, p + ".q_cross", d, d, rng);
    a.k_cross = nn::Linear::create(store, p + ".k_cross", d, d, rng);
    a.v_cross = nn::Linear::create(store, p + ".v_cross", d, d, rng);
    a.norm = nn::LayerNorm::create(store, p + ".norm", d);
    a.write = nn::Linear::create(store, p + ".W_m", d, d, rng, false);
    a.init_token = store.add_uniform(p + ".init_token", 1, d, 1, rng);
    agents_.push_back(a);
  }
}

GlobalMemorySpace SharedMemory::init_memory(const ParamStore& store) const {
  GlobalMemorySpace m(agents(), cfg_.d_model);
  for (int i = 0; i < agents(); ++i) m.row(i) = store.value(agents_[static_cast<std::size_t>(i)].init_token);
  return m;
}

Var SharedMemory::init_tokens(Tape& tape, ParamStore& store) const {
  std::vector<Var> rows;
  rows.reserve(agents_.size());
  for (const auto& a : agents_) rows.push_back(tape.param(store, a.init_token));
  return rows.size() == 1 ? rows.front() : nn::concat_rows(rows);
}

Var SharedMemory::private_sequence(Tape& tape, ParamStore& store, int agent, Var token,
                                   const Matrix& window) const {
  require(window.rows() == cfg_.history + 1 && window.cols() == cfg_.obs_size,
          "private_sequence: window must be (history + 1) x obs_size");
  require(token.rows() == 1 && token.cols() == cfg_.d_model, "private_sequence: token must be 1 x d_model");
  const auto& a = agents_[static_cast<std::size_t>(agent)];
  Var obs = a.embed(tape, store, tape.constant(window));
  const Var parts[] = {token, obs};
  return nn::concat_rows(parts);
}

nn::AttentionOutput SharedMemory::self_attend(Tape& tape, ParamStore& store, int agent, Var seq) const {
  const auto& a = agents_[static_cast<std::size_t>(agent)];
  return nn::attention(a.q_self(tape, store, seq), a.k_self(tape, store, seq), a.v_self(tape, store, seq));
}

nn::AttentionOutput SharedMemory::cross_attend(Tape& tape, ParamStore& store, int agent, Var self_out,
                                               Var memory) const {
  require(memory.cols() == cfg_.d_model, "cross_attend: memory width mismatch");
  const auto& a = agents_[static_cast<std::size_t>(agent)];
  return nn::attention(a.q_cross(tape, store, self_out), a.k_cross(tape, store, memory),
                       a.v_cross(tape, store, memory));
}

SharedMemory::Update SharedMemory::update(Tape& tape, ParamStore& store, int agent, Var cross_out) const {
  const auto& a = agents_[static_cast<std::size_t>(agent)];
  Var h = a.norm(tape, store, cross_out);
  return {a.write(tape, store, nn::row(h, 0)), nn::row(h, -1)};
}

SharedMemory::AgentStep SharedMemory::forward_agent(Tape& tape, ParamStore& store, int agent, Var memory,
                                                    const Matrix& window) const {
  require(agent >= 0 && agent < agents(), "forward_agent: agent index out of range");
  require(memory.rows() == agents(), "forward_agent: memory must hold one token per agent");
  Var token = nn::row(memory, agent);
  Var seq = private_sequence(tape, store, agent, token, window);
  auto self = self_attend(tape, store, agent, seq);
  auto cross = cross_attend(tape, store, agent, self.out, memory);
  auto up = update(tape, store, agent, cross.out);
  return {up.decision, up.next_token, self.weights, cross.weights};
}

SharedMemory::StepResult SharedMemory::step_all(ParamStore& store, const std::vector<Matrix>& windows,
                                                const GlobalMemorySpace& memory) const {
  require(static_cast<int>(windows.size()) == agents(), "step_all: one window per agent required");
  StepResult res;
  res.decisions.resize(agents(), cfg_.d_model);
  res.next_memory.resize(agents(), cfg_.d_model);
  for (int i = 0; i < agents(); ++i) {
    Tape tape;
    Var m = tape.constant(memory);
    auto s = forward_agent(tape, store, i, m, windows[static_cast<std::size_t>(i)]);
    res.decisions.row(i) = s.decision.value();
    res.next_memory.row(i) = s.next_token.value();
  }
  return res;
}

Matrix history_window(const Matrix& observations, int t, int history) {
  require(t >= 0 && t < observations.rows(), "history_window: step out of range");
  Matrix w = Matrix::Zero(history + 1, observations.cols());
  for (int k = 0; k <= history; ++k) {
    const int src = t - history + k;
    if (src >= 0) w.row(k) = observations.row(src);
  }
  return w;
}

}  // namespace riskgrid::memory
