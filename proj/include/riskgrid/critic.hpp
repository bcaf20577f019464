#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "riskgrid/neural/layers.hpp"
#include "riskgrid/risk.hpp"

// Centralized distributional critic. Each agent's network maps its local
// observation to J quantile atoms; a state-dependent simplex weighting mixes
// them into the joint return distribution, whose left-tail mean is the
// risk-sensitive state value.
namespace riskgrid::critic {

using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Var;

struct CriticConfig {
  Eigen::Index obs_size = 6;
  Eigen::Index hidden = 64;
  Eigen::Index quantiles = 32;
  nn::ModelDims mixer{};  ///< d_model is also the GRU width
  double kappa = 10.0;

  void validate() const;
};

/// obs -> hidden (tanh) -> hidden (tanh) -> J atoms.
struct QuantileCritic {
  nn::Linear l1, l2, out;

  static QuantileCritic create(ParamStore& store, const std::string& prefix, const CriticConfig& cfg,
                               std::mt19937_64& rng);
  /// rows x obs_size -> rows x J
  Var operator()(Tape& tape, ParamStore& store, Var obs) const;
};

/// Mixing weights from the global-state history. A GRU runs over the
/// concatenated observations s_1..s_t; agent i's context row is the GRU state
/// plus a projection of its own observation, the rows go through multi-head
/// attention, and each output row c_i is scored by u^T tanh(W c_i + b).
struct AttentionMixer {
  nn::GRU gru;
  nn::Linear obs_proj;
  nn::MultiHead attn;
  nn::Linear score;  ///< W, b
  std::size_t u = 0;  ///< d_model x 1
  int agents = 0;
  Eigen::Index obs_size = 0;

  static AttentionMixer create(ParamStore& store, const std::string& prefix, int n_agents,
                               const CriticConfig& cfg, std::mt19937_64& rng);
  /// states: T x (N * obs_size), one global state per row of an episode.
  /// Row t of the result holds k(s^{1:t}) over the N agents.
  Var weights(Tape& tape, ParamStore& store, Var states) const;
  /// Weights for one step given the GRU state after s_t.
  Var step_weights(Tape& tape, ParamStore& store, Var hidden, Var state) const;
};

/// Per-agent critics plus the mixer over one parameter store.
class CentralCritic {
 public:
  CentralCritic() = default;
  CentralCritic(ParamStore& store, int n_agents, const CriticConfig& cfg, std::mt19937_64& rng);

  int agents() const { return static_cast<int>(critics_.size()); }
  const CriticConfig& config() const { return cfg_; }
  const AttentionMixer& mixer() const { return mixer_; }
  const QuantileCritic& agent(int i) const { return critics_[static_cast<std::size_t>(i)]; }

  /// Joint atoms for every step of an episode: T x J.
  Var joint(Tape& tape, ParamStore& store, const Matrix& states) const;
  /// Same without recording gradients for the caller.
  Matrix joint_values(ParamStore& store, const Matrix& states) const;

 private:
  CriticConfig cfg_;
  std::vector<QuantileCritic> critics_;
  AttentionMixer mixer_;
};

/// theta(s, w_j) = sum_i k_i theta_i(o_i, w_j). `atoms` holds one row per
/// agent (N x J); `k` has length N.
template <typename AtomsT, typename WeightsT>
Eigen::RowVectorXd mix(const Eigen::MatrixBase<AtomsT>& atoms, const Eigen::MatrixBase<WeightsT>& k) {
  require(k.size() == atoms.rows(), "mix: one weight per agent required");
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(atoms.cols());
  for (Eigen::Index i = 0; i < atoms.rows(); ++i) out += k.derived().coeff(i) * atoms.row(i);
  return out;
}

/// Left-tail mean of a joint distribution.
template <typename Derived>
double risk_value(const Eigen::DenseBase<Derived>& joint, double alpha) {
  return risk::phi_alpha(joint, alpha);
}

/// Per-step TD targets r_t + gamma * z_j(s_{t+1}) from `target_joint`, the
/// frozen copy's T x J atoms on the same episode. The last step is terminal
/// and its target is r_t for every atom.
Matrix td_targets(std::span<const double> rewards, const Matrix& target_joint, double gamma);

/// Quantile-Huber loss of the live joint atoms against frozen targets.
Var critic_loss(Var joint, const Matrix& targets, double kappa);

}  // namespace riskgrid::critic
