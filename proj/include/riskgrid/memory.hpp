#pragma once

#include <random>
#include <vector>

#include "riskgrid/neural/layers.hpp"

// Shared-memory coordination. Each agent keeps one memory token; the N
// tokens together form the global memory space that every agent reads
// through cross-attention. Per step an agent
//   1. self-attends over [m_i, o_{t-h}, ..., o_t] (its private sequence),
//   2. cross-attends from that representation into the memory snapshot M_t,
//   3. layer-normalizes the result H, writes m_{i,t+1} = H[0] W_m and emits
//      the decision vector f_{i,t} = H[L-1].
namespace riskgrid::memory {

using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Var;

struct MemoryConfig {
  Eigen::Index d_model = 64;
  Eigen::Index obs_size = 6;
  int history = 8;  ///< observations before the current one in the private sequence
  /// When set, memory tokens enter each step as constants and no gradient
  /// crosses steps; otherwise training backpropagates through the memory
  /// chain of the whole episode.
  bool detach_across_steps = false;

  Eigen::Index sequence_length() const { return history + 2; }
};

/// Row i holds agent i's token (N x d_model).
using GlobalMemorySpace = Matrix;

class SharedMemory {
 public:
  SharedMemory(ParamStore& store, int n_agents, const MemoryConfig& cfg, std::mt19937_64& rng);

  int agents() const { return static_cast<int>(agents_.size()); }
  const MemoryConfig& config() const { return cfg_; }

  /// Learned initial tokens as values.
  GlobalMemorySpace init_memory(const ParamStore& store) const;
  /// Learned initial tokens as a differentiable N x d_model node.
  Var init_tokens(Tape& tape, ParamStore& store) const;

  /// Embeds the (history + 1) x obs_size window and prepends the token.
  Var private_sequence(Tape& tape, ParamStore& store, int agent, Var token, const Matrix& window) const;
  nn::AttentionOutput self_attend(Tape& tape, ParamStore& store, int agent, Var seq) const;
  nn::AttentionOutput cross_attend(Tape& tape, ParamStore& store, int agent, Var self_out, Var memory) const;

  struct Update {
    Var next_token;  ///< 1 x d_model
    Var decision;    ///< 1 x d_model
  };
  Update update(Tape& tape, ParamStore& store, int agent, Var cross_out) const;

  struct AgentStep {
    Var decision;
    Var next_token;
    Var self_weights;
    Var cross_weights;
  };
  /// Full pipeline for one agent reading `memory` (N x d_model).
  AgentStep forward_agent(Tape& tape, ParamStore& store, int agent, Var memory, const Matrix& window) const;

  struct StepResult {
    Matrix decisions;  ///< N x d_model
    GlobalMemorySpace next_memory;
  };
  /// Synchronous step: all agents read the same snapshot, the writes form
  /// the next snapshot. Inference only.
  StepResult step_all(ParamStore& store, const std::vector<Matrix>& windows, const GlobalMemorySpace& memory) const;

 private:
  struct AgentParams {
    nn::Linear embed;
    nn::Linear q_self, k_self, v_self;
    nn::Linear q_cross, k_cross, v_cross;
    nn::LayerNorm norm;
    nn::Linear write;  // W_m, no bias
    std::size_t init_token = 0;
  };

  MemoryConfig cfg_;
  std::vector<AgentParams> agents_;
};

/// Zero-padded observation window ending at step t: rows t-history..t of
/// `observations` (T x obs_size), rows before step 0 left at zero.
Matrix history_window(const Matrix& observations, int t, int history);

}  // namespace riskgrid::memory
