#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "riskgrid/env.hpp"
#include "riskgrid/neural/layers.hpp"

// Decentralized Gaussian actors and the PPO machinery around them. Actions
// live in a normalized box [-1, 1]^2 = (p_es, p_mt) and are mapped affinely
// to physical units; the env projection afterwards is part of the world.
namespace riskgrid::agent {

using nn::Matrix;
using nn::ParamStore;
using nn::Tape;
using nn::Var;

inline constexpr Eigen::Index kActionSize = 2;
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct PPOConfig {
  double clip = 0.2;
  double lambda = 0.95;
  double gamma = 0.99;
  int epochs = 4;
  int minibatch = 0;  ///< 0 = the whole batch
  double entropy_coef = 0.01;
  bool normalize_advantages = true;

  void validate() const;
};

enum class Mode { sample, mean };

struct ActSample {
  Eigen::RowVector2d u;  ///< normalized action before the affine map
  double log_prob = 0;
};

/// Per-agent MLP decision vector -> hidden (tanh) -> 2 (tanh) giving the mean,
/// plus one state-independent log-std row per agent.
class ActorPolicy {
 public:
  ActorPolicy() = default;
  ActorPolicy(ParamStore& store, int n_agents, Eigen::Index in_dim, Eigen::Index hidden, std::mt19937_64& rng,
              double log_std_init = -0.5);

  int agents() const { return static_cast<int>(heads_.size()); }
  Eigen::Index input_size() const { return in_dim_; }

  /// rows x in_dim -> rows x 2
  Var mean(Tape& tape, ParamStore& store, int agent, Var f) const;
  /// 1 x 2, clamped to [kLogStdMin, kLogStdMax].
  Var log_std(Tape& tape, ParamStore& store, int agent) const;

  ActSample act(ParamStore& store, int agent, const nn::RowVector& f, Mode mode, std::mt19937_64& rng) const;

 private:
  struct Head {
    nn::Linear l1, l2;
    std::size_t log_std = 0;
  };
  std::vector<Head> heads_;
  Eigen::Index in_dim_ = 0;
};

/// Log density of a diagonal Gaussian, summed over action dimensions.
double gaussian_log_prob(const Eigen::RowVector2d& u, const Eigen::RowVector2d& mean,
                         const Eigen::RowVector2d& log_std);
/// Differentiable per-row version: u is a constant rows x 2 matrix.
Var gaussian_log_prob(Var u, Var mean, Var log_std);
/// Entropy of the diagonal Gaussian (1 x 1).
Var gaussian_entropy(Var log_std);

/// Affine map of u in [-1, 1]^2 onto [-charge_max, discharge_max] x [mt_min, mt_max].
env::Action to_physical(const Eigen::RowVector2d& u, const env::MicrogridParams& mg);

/// A_t = sum_l (gamma lambda)^l delta_{t+l}, delta_t = r_t + gamma V(s_{t+1}) - V(s_t),
/// with V(s_T) = 0, by backward recursion.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                        double lambda);

/// min(zeta A, clip(zeta, 1 - eps, 1 + eps) A) for one sample.
double clipped_surrogate(double ratio, double advantage, double eps);

/// Mean clipped surrogate over rows (to maximize). `old_log_prob` and
/// `advantages` are rows x 1 constants.
Var ppo_surrogate(Var new_log_prob, const Matrix& old_log_prob, const Matrix& advantages, double eps);

/// Rescales to mean 0 / std 1 in place; a constant batch is only centred.
void normalize(std::vector<double>& adv);

struct Transition {
  int t = 0;
  Matrix obs;                 ///< N x obs_size scaled features at t
  Matrix memory;              ///< N x d snapshot read at t; empty without shared memory
  Matrix actions;             ///< N x 2 normalized actions
  Eigen::VectorXd log_probs;  ///< N
  double reward = 0;          ///< scaled team reward
  double risk_value = 0;
  bool done = false;
};

/// On-policy storage for one update batch. Within an episode the step
/// indices must be contiguous and every episode starts at t = 0.
class RolloutBuffer {
 public:
  explicit RolloutBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(Transition tr);
  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return steps_.size() == capacity_; }
  std::vector<Transition>& steps() { return steps_; }
  const std::vector<Transition>& steps() const { return steps_; }
  /// [begin, end) ranges of complete episodes.
  std::vector<std::pair<std::size_t, std::size_t>> episodes() const;

 private:
  std::size_t capacity_ = 0;
  std::vector<Transition> steps_;
};

}  // namespace riskgrid::agent
