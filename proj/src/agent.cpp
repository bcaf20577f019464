#include "riskgrid/agent.hpp"

#include <cmath>
#include <numbers>

#include "riskgrid/errors.hpp"

namespace riskgrid::agent {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

void PPOConfig::validate() const {
  if (!(clip > 0 && clip < 1)) throw ConfigError("ppo: clip must lie in (0, 1)");
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("ppo: lambda must lie in [0, 1]");
  if (!(gamma >= 0 && gamma < 1)) throw ConfigError("ppo: gamma must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("ppo: epochs must be >= 1");
  if (minibatch < 0) throw ConfigError("ppo: minibatch must be >= 0");
  if (!(entropy_coef >= 0)) throw ConfigError("ppo: entropy_coef must be non-negative");
}

ActorPolicy::ActorPolicy(ParamStore& store, int n_agents, Eigen::Index in_dim, Eigen::Index hidden,
                         std::mt19937_64& rng, double log_std_init)
    : in_dim_(in_dim) {
  require(n_agents >= 1 && in_dim > 0 && hidden > 0, "ActorPolicy: bad sizes");
  for (int i = 0; i < n_agents; ++i) {
    const std::string p = "actor." + std::to_string(i);
    Head h;
    h.l1 = nn::Linear::create(store, p + ".l1", in_dim, hidden, rng);
    h.l2 = nn::Linear::create(store, p + ".l2", hidden, kActionSize, rng);
    h.log_std = store.add(p + ".log_std", Matrix::Constant(1, kActionSize, log_std_init));
    heads_.push_back(h);
  }
}

Var ActorPolicy::mean(Tape& tape, ParamStore& store, int agent, Var f) const {
  const auto& h = heads_[static_cast<std::size_t>(agent)];
  return nn::tanh(h.l2(tape, store, nn::tanh(h.l1(tape, store, f))));
}

Var ActorPolicy::log_std(Tape& tape, ParamStore& store, int agent) const {
  return nn::clamp(tape.param(store, heads_[static_cast<std::size_t>(agent)].log_std), kLogStdMin, kLogStdMax);
}

ActSample ActorPolicy::act(ParamStore& store, int agent, const nn::RowVector& f, Mode mode,
                           std::mt19937_64& rng) const {
  require(agent >= 0 && agent < agents(), "act: agent index out of range");
  require(f.size() == in_dim_ && f.allFinite(), "act: decision vector must be finite and sized");
  Tape tape;
  const Eigen::RowVector2d mu = mean(tape, store, agent, tape.constant(f)).value();
  const Eigen::RowVector2d ls = log_std(tape, store, agent).value();
  ActSample s;
  s.u = mu;
  if (mode == Mode::sample) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < kActionSize; ++j) s.u(j) = mu(j) + std::exp(ls(j)) * normal(rng);
  }
  s.log_prob = gaussian_log_prob(s.u, mu, ls);
  return s;
}

double gaussian_log_prob(const Eigen::RowVector2d& u, const Eigen::RowVector2d& mean,
                         const Eigen::RowVector2d& log_std) {
  double lp = 0;
  for (Eigen::Index j = 0; j < kActionSize; ++j) {
    const double d = u(j) - mean(j);
    lp += d * d * std::exp(-2.0 * log_std(j)) * -0.5 - log_std(j) - kHalfLog2Pi;
  }
  return lp;
}

Var gaussian_log_prob(Var u, Var mean, Var log_std) {
  Var quad = nn::scale(nn::mul_row(nn::square(nn::sub(u, mean)), nn::exp(nn::scale(log_std, -2.0))), -0.5);
  return nn::sum_cols(nn::add_scalar(nn::add_row(quad, nn::neg(log_std)), -kHalfLog2Pi));
}

Var gaussian_entropy(Var log_std) {
  return nn::sum(nn::add_scalar(log_std, 0.5 + kHalfLog2Pi));
}

env::Action to_physical(const Eigen::RowVector2d& u, const env::MicrogridParams& mg) {
  auto affine = [](double x, double lo, double hi) { return lo + 0.5 * (x + 1.0) * (hi - lo); };
  return {affine(u(0), -mg.ess_charge_max, mg.ess_discharge_max), affine(u(1), mg.mt_min, mg.mt_max)};
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double gamma,
                        double lambda) {
  require(rewards.size() == values.size(), "gae: rewards and values must have equal length");
  const std::size_t T = rewards.size();
  std::vector<double> adv(T, 0.0);
  double acc = 0;
  for (std::size_t k = T; k-- > 0;) {
    const double next = k + 1 < T ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next - values[k];
    acc = delta + gamma * lambda * acc;
    adv[k] = acc;
  }
  return adv;
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

Var ppo_surrogate(Var new_log_prob, const Matrix& old_log_prob, const Matrix& advantages, double eps) {
  require(new_log_prob.cols() == 1 && old_log_prob.rows() == new_log_prob.rows() &&
              advantages.rows() == new_log_prob.rows() && old_log_prob.cols() == 1 && advantages.cols() == 1,
          "ppo_surrogate: shape mismatch");
  Tape& tape = *new_log_prob.tape;
  Var ratio = nn::exp(nn::sub(new_log_prob, tape.constant(old_log_prob)));
  Var a = tape.constant(advantages);
  return nn::mean(nn::minimum(nn::mul(ratio, a), nn::mul(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), a)));
}

void normalize(std::vector<double>& adv) {
  if (adv.empty()) return;
  double mean = 0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double sd = std::sqrt(var);
  for (double& a : adv) a = sd > 1e-12 ? (a - mean) / sd : a - mean;
}

void RolloutBuffer::push(Transition tr) {
  require(steps_.size() < capacity_, "RolloutBuffer: capacity exceeded");
  if (steps_.empty() || steps_.back().done)
    require(tr.t == 0, "RolloutBuffer: an episode must start at t = 0");
  else
    require(tr.t == steps_.back().t + 1, "RolloutBuffer: step indices must be contiguous");
  steps_.push_back(std::move(tr));
}

std::vector<std::pair<std::size_t, std::size_t>> RolloutBuffer::episodes() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < steps_.size(); ++k)
    if (steps_[k].done) {
      out.emplace_back(begin, k + 1);
      begin = k + 1;
    }
  return out;
}

}  // namespace riskgrid::agent
