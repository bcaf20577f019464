// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// RISKGRID_ACCEPT_ONLY=1,4,7 restricts the run to the listed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "riskgrid/agent.hpp"
#include "riskgrid/config.hpp"
#include "riskgrid/critic.hpp"
#include "riskgrid/env.hpp"
#include "riskgrid/risk.hpp"
#include "riskgrid/shapley.hpp"
#include "riskgrid/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/pipelines.hpp"

using namespace riskgrid;
using nn::Matrix;
using riskgrid::testing::random_matrix;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. environment invariants

Outcome env_invariants() {
  env::SystemParams sys;
  sys.mgs.assign(3, env::MicrogridParams{});
  sys.mgs[1].pv_scale = 1.3;
  sys.mgs[2].load_scale = 0.7;
  sys.grid_buy_max = 600;
  sys.grid_sell_max = 400;
  sys.horizon = 24;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  scenarios::ScenarioSet set;
  set.pv = (scenarios::ProfileMatrix::Random(5, 24).array().abs() * 350).matrix();
  set.load = (scenarios::ProfileMatrix::Random(5, 24).array().abs() * 700).matrix();
  set.pv_probs = Eigen::VectorXd::Constant(5, 0.2);
  set.load_probs = Eigen::VectorXd::Constant(5, 0.2);

  const auto t0 = Clock::now();
  double worst_residual = 0;
  long exclusivity = 0, limits = 0, soc = 0, steps = 0;
  env::EnvState state;
  while (steps < 100000) {
    if (steps % 24 == 0) {
      state = env::reset(sys, {static_cast<int>(u(rng) * 5), static_cast<int>(u(rng) * 5)}, set).first;
      // Random state, not only the initial one.
      for (std::size_t i = 0; i < 3; ++i) {
        state.soc[i] = 0.1 + 0.8 * u(rng);
        state.mt_prev[i] = 300 * u(rng);
      }
    }
    std::vector<env::Action> acts;
    for (std::size_t i = 0; i < 3; ++i) {
      const env::Action raw{(u(rng) - 0.5) * 1000, (u(rng) - 0.3) * 800};
      acts.push_back(env::project_action(raw, state, i, sys));
    }
    auto [next, out] = env::step(state, acts, sys, set);
    double gb = 0, gs = 0;
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& o = out.mg[i];
      worst_residual = std::max(worst_residual, std::abs(env::balance_residual(o)));
      if (!(o.p_c == 0.0 || o.p_d == 0.0) || !(o.p_gb == 0.0 || o.p_gs == 0.0)) ++exclusivity;
      if (o.soc < sys.mgs[i].soc_min || o.soc > sys.mgs[i].soc_max) ++soc;
      gb += o.p_gb;
      gs += o.p_gs;
    }
    if (gb > sys.grid_buy_max || gs > sys.grid_sell_max) ++limits;
    state = next.t == sys.horizon ? state : next;
    if (next.t == sys.horizon) state.t = 0;
    ++steps;
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_residual <= 1e-9 && exclusivity == 0 && limits == 0 && soc == 0 && secs < 10;
  return {pass, "1e5 steps: max |balance residual| " + fmt(worst_residual) + " kW (tol 1e-9), exclusivity " +
                    std::to_string(exclusivity) + ", limit " + std::to_string(limits) + ", soc " +
                    std::to_string(soc) + " violations, " + fmt(secs, 3) + " s (limit 10 s)"};
}

// ---------------------------------------------------------------------------
// 2. CVaR against the literal minimization formula

Outcome cvar_oracle() {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> a(0.01, 0.99);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto d = riskgrid::testing::random_loss_table(rng, 25);
    const double alpha = k % 4 == 0 ? 0.9 : a(rng);
    worst = std::max(worst, std::abs(risk::cvar_alpha(d, alpha) - riskgrid::testing::cvar_minimization_oracle(d, alpha)));
  }
  risk::DiscreteLossDistribution hand{Eigen::Vector2d(0, 10), Eigen::Vector2d(0.9, 0.1)};
  const double h = risk::cvar_alpha(hand, 0.9);
  const bool pass = worst <= 1e-10 && std::abs(h - 10.0) <= 1e-10;
  return {pass, "1000 tables: max |cvar - oracle| " + fmt(worst) + " (tol 1e-10); hand case " + fmt(h, 12) +
                    " (expect 10)"};
}

// ---------------------------------------------------------------------------
// 3. gradient checks

Outcome gradient_checks() {
  using nn::Var;
  using riskgrid::testing::check_inputs;
  using riskgrid::testing::check_params;
  using riskgrid::testing::project;
  using Fn = std::function<Var(nn::Tape&, const std::vector<Var>&)>;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  auto R = [&](Eigen::Index r, Eigen::Index c) { return random_matrix(r, c, rng); };
  // Inputs kept away from clamp bounds and from ties of minimum.
  Matrix clamp_in = R(3, 4);
  for (Eigen::Index i = 0; i < clamp_in.size(); ++i)
    if (std::abs(std::abs(clamp_in.data()[i]) - 0.5) < 1e-2) clamp_in.data()[i] += 0.05;
  const Matrix min_a = R(3, 4);
  const Matrix min_b = min_a + (R(3, 4).cwiseSign() * 0.5);

  struct Case {
    const char* name;
    Fn f;
    std::vector<Matrix> in;
  };
  auto unary = [&](Var (*op)(Var)) { return Fn([op](nn::Tape& t, const std::vector<Var>& v) { return project(t, op(v[0])); }); };
  std::vector<Case> cases{
      {"matmul", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::matmul(v[0], v[1])); }, {R(3, 4), R(4, 2)}},
      {"matmul_nt", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::matmul_nt(v[0], v[1])); }, {R(3, 4), R(5, 4)}},
      {"transpose", unary(&nn::transpose), {R(3, 4)}},
      {"add", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::add(v[0], v[1])); }, {R(3, 4), R(3, 4)}},
      {"sub", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::sub(v[0], v[1])); }, {R(3, 4), R(3, 4)}},
      {"mul", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::mul(v[0], v[1])); }, {R(3, 4), R(3, 4)}},
      {"add_row", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::add_row(v[0], v[1])); }, {R(3, 4), R(1, 4)}},
      {"mul_row", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::mul_row(v[0], v[1])); }, {R(3, 4), R(1, 4)}},
      {"scale", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::scale(v[0], 1.7)); }, {R(3, 4)}},
      {"add_scalar", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::add_scalar(v[0], 0.3)); }, {R(3, 4)}},
      {"neg", unary(&nn::neg), {R(3, 4)}},
      {"tanh", unary(&nn::tanh), {R(3, 4)}},
      {"sigmoid", unary(&nn::sigmoid), {R(3, 4)}},
      {"exp", unary(&nn::exp), {R(3, 4)}},
      {"square", unary(&nn::square), {R(3, 4)}},
      {"clamp", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::clamp(v[0], -0.5, 0.5)); }, {clamp_in}},
      {"minimum", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::minimum(v[0], v[1])); }, {min_a, min_b}},
      {"softmax_rows", unary(&nn::softmax_rows), {R(3, 4)}},
      {"layer_norm_rows", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::layer_norm_rows(v[0], v[1], v[2])); }, {R(3, 5), R(1, 5), R(1, 5)}},
      {"concat_cols", [](nn::Tape& t, const std::vector<Var>& v) { const Var p[] = {v[0], v[1]}; return project(t, nn::concat_cols(p)); }, {R(3, 2), R(3, 3)}},
      {"concat_rows", [](nn::Tape& t, const std::vector<Var>& v) { const Var p[] = {v[0], v[1]}; return project(t, nn::concat_rows(p)); }, {R(2, 3), R(3, 3)}},
      {"slice_cols", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::slice_cols(v[0], 1, 2)); }, {R(3, 4)}},
      {"row", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::row(v[0], 1)); }, {R(3, 4)}},
      {"sum", [](nn::Tape& t, const std::vector<Var>& v) { return nn::sum(nn::square(v[0])); }, {R(3, 4)}},
      {"mean", [](nn::Tape& t, const std::vector<Var>& v) { return nn::mean(nn::tanh(v[0])); }, {R(3, 4)}},
      {"sum_cols", unary(&nn::sum_cols), {R(3, 4)}},
      {"attention", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, nn::attention(v[0], v[1], v[2]).out); }, {R(2, 3), R(4, 3), R(4, 3)}},
      {"gaussian_log_prob", [](nn::Tape& t, const std::vector<Var>& v) { return project(t, agent::gaussian_log_prob(t.constant(Matrix::Ones(3, 2)), v[0], v[1])); }, {R(3, 2), R(1, 2)}},
      {"gaussian_entropy", [](nn::Tape&, const std::vector<Var>& v) { return agent::gaussian_entropy(v[0]); }, {R(1, 2)}},
  };
  double worst = 0;
  std::string worst_name;
  for (const auto& c : cases) {
    const double e = check_inputs(c.f, c.in);
    if (e > worst) worst = e, worst_name = c.name;
  }
  auto track = [&](const char* name, double e) {
    if (e > worst) worst = e, worst_name = name;
  };

  // Layers in their parameters.
  const Matrix x = R(3, 4);
  nn::ParamStore s1, s2, s3, s4;
  auto lin = nn::Linear::create(s1, "lin", 4, 3, rng);
  track("linear", check_params([&](nn::Tape& t, nn::ParamStore& s) { return project(t, lin(t, s, t.constant(x))); }, s1));
  auto ln = nn::LayerNorm::create(s2, "ln", 4);
  s2.value(ln.gain) = R(1, 4);
  track("layer_norm", check_params([&](nn::Tape& t, nn::ParamStore& s) { return project(t, ln(t, s, t.constant(x))); }, s2));
  auto mh = nn::MultiHead::create(s3, "mh", nn::ModelDims{4, 2, 4}, rng);
  track("multi_head", check_params([&](nn::Tape& t, nn::ParamStore& s) { return project(t, mh(t, s, t.constant(x))); }, s3));
  auto gru = nn::GRU::create(s4, "gru", 4, 3, rng);
  track("gru", check_params(
                   [&](nn::Tape& t, nn::ParamStore& s) {
                     std::vector<Var> xs;
                     for (Eigen::Index i = 0; i < 3; ++i) xs.push_back(t.constant(x.row(i)));
                     return project(t, gru.run(t, s, xs, t.constant(Matrix::Zero(1, 3))));
                   },
                   s4));

  // Composed pipelines.
  riskgrid::testing::MemoryChain chain(2, 304);
  track("memory_pipeline", check_params([&](nn::Tape& t, nn::ParamStore& s) { return chain.loss(t, s); }, chain.store));
  riskgrid::testing::CriticPipeline crit(2, 3, 305);
  track("critic_pipeline", check_params([&](nn::Tape& t, nn::ParamStore& s) { return crit.joint_projection(t, s); }, crit.store));

  // Kinked quantile loss, sampled away from the kinks.
  crit.move_targets_off_kinks(1e-3);
  const double kinked = check_params([&](nn::Tape& t, nn::ParamStore& s) { return crit.loss(t, s); }, crit.store);
  Matrix qp = R(4, 4), qt = R(4, 4) * 3;
  for (Eigen::Index i = 0; i < qt.size(); ++i) {
    double u = qt.data()[i] - qp.data()[i];
    for (double k : {-1.0, 0.0, 1.0})
      if (std::abs(u - k) < 1e-2) u = k + (u < k ? -1e-2 : 1e-2);
    qt.data()[i] = qp.data()[i] + u;
  }
  const std::vector<double> levels{0.125, 0.375, 0.625, 0.875};
  const double qh = check_inputs([&](nn::Tape&, const std::vector<Var>& v) { return nn::quantile_huber(v[0], qt, levels, 1.0); }, {qp});
  const double kinked_worst = std::max(kinked, qh);

  const double secs = seconds_since(t0);
  const bool pass = worst <= 1e-4 && kinked_worst <= 1e-3 && secs < 60;
  return {pass, std::to_string(cases.size() + 6) + " smooth checks: max rel error " + fmt(worst) + " (" + worst_name +
                    ", tol 1e-4); quantile loss " + fmt(kinked_worst) + " (tol 1e-3); " + fmt(secs, 3) +
                    " s (limit 60 s)"};
}

// ---------------------------------------------------------------------------
// 4. advantage recursion against the double sum

Outcome gae_oracle() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> len(1, 16);
  std::uniform_real_distribution<double> u(-5, 5), unit(0, 1);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const auto T = static_cast<std::size_t>(len(rng));
    std::vector<double> r(T), v(T);
    for (std::size_t t = 0; t < T; ++t) r[t] = u(rng), v[t] = u(rng);
    const double g = unit(rng), l = unit(rng);
    const auto a = agent::gae(r, v, g, l);
    const auto o = riskgrid::testing::gae_double_sum(r, v, g, l);
    for (std::size_t t = 0; t < T; ++t) worst = std::max(worst, std::abs(a[t] - o[t]));
  }
  return {worst <= 1e-12, "100 instances: max |gae - double sum| " + fmt(worst) + " (tol 1e-12)"};
}

// ---------------------------------------------------------------------------
// 5. score function times a state-only baseline has zero mean

Outcome baseline_vanishes() {
  std::mt19937_64 rng(505);
  nn::ParamStore actor_store, critic_store;
  agent::ActorPolicy pi(actor_store, 1, env::kObservationSize, 4, rng);
  critic::CriticConfig cc;
  cc.hidden = 8;
  auto q = critic::QuantileCritic::create(critic_store, "critic.0", cc, rng);
  const std::size_t P = actor_store.scalar_count();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P)), sq = sum;
  const int n = 100000;
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < n; ++k) {
    Matrix s(1, env::kObservationSize);
    for (Eigen::Index j = 0; j < s.size(); ++j) s.data()[j] = u(rng);
    double v;
    {
      nn::Tape t;
      v = critic::risk_value(q(t, critic_store, t.constant(s)).value(), 0.9);
    }
    const auto a = pi.act(actor_store, 0, s, agent::Mode::sample, rng);
    actor_store.zero_grad();
    nn::Tape t;
    const nn::Var lp = agent::gaussian_log_prob(t.constant(Matrix(a.u)), pi.mean(t, actor_store, 0, t.constant(s)),
                                                pi.log_std(t, actor_store, 0));
    t.backward(nn::sum(lp));
    Eigen::Index off = 0;
    for (std::size_t p = 0; p < actor_store.size(); ++p) {
      const Matrix& g = actor_store.grad(p);
      for (Eigen::Index i = 0; i < g.size(); ++i, ++off) {
        const double x = g.data()[i] * v;
        sum(off) += x;
        sq(off) += x * x;
      }
    }
  }
  const Eigen::VectorXd mean = sum / n;
  const Eigen::VectorXd se = ((sq / n - mean.cwiseProduct(mean)) / n).cwiseSqrt();
  double worst = 0;
  int outside = 0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = std::abs(mean(i)) / se(i);
    worst = std::max(worst, z);
    if (z > 3) ++outside;
  }
  return {outside == 0, std::to_string(P) + " components, 1e5 samples: max |mean| / SE " + fmt(worst) +
                            " (limit 3), components outside " + std::to_string(outside)};
}

// ---------------------------------------------------------------------------
// 6. Shapley axioms

Outcome shapley_axioms() {
  using shapley::CharacteristicTable;
  using shapley::Coalition;
  std::mt19937_64 rng(606);
  std::uniform_int_distribution<int> iv(-1000, 1000);
  std::uniform_real_distribution<double> rv(-100, 100);
  int failures = 0;
  std::vector<std::string> notes;

  // Efficiency with exact rational weights: integer games, integer numerators.
  for (int n = 1; n <= 7; ++n)
    for (int rep = 0; rep < 20; ++rep) {
      CharacteristicTable t(n);
      std::vector<long long> y(std::size_t{1} << n, 0);
      for (Coalition s = 1; s <= t.grand(); ++s) {
        y[s] = iv(rng);
        t.set(s, static_cast<double>(y[s]));
      }
      long long fact = 1;
      for (int k = 2; k <= n; ++k) fact *= k;
      std::vector<long long> fw(static_cast<std::size_t>(n) + 1, 1);
      for (int k = 1; k <= n; ++k) fw[static_cast<std::size_t>(k)] = fw[static_cast<std::size_t>(k) - 1] * k;
      long long total = 0;
      const auto psi = shapley::shapley_allocate(t);
      for (int i = 0; i < n; ++i) {
        long long num = 0;
        for (Coalition s = 0; s <= t.grand(); ++s) {
          if (s & (1u << i)) continue;
          const int k = std::popcount(s);
          num += fw[static_cast<std::size_t>(k)] * fw[static_cast<std::size_t>(n - k - 1)] * (y[s | (1u << i)] - y[s]);
        }
        total += num;
        if (psi[static_cast<std::size_t>(i)] != static_cast<double>(num) / static_cast<double>(fact)) ++failures;
      }
      if (total != fact * y[t.grand()]) ++failures;
    }
  const int after_eff = failures;
  if (after_eff) notes.push_back("efficiency");

  // Symmetry: swapping the roles of players 0 and 1 leaves the game unchanged.
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 3 + rep % 4;
    CharacteristicTable t(n);
    std::vector<double> by_rest(std::size_t{1} << n);
    for (auto& v : by_rest) v = rv(rng);
    for (Coalition s = 1; s <= t.grand(); ++s) {
      // value depends on |S ∩ {0,1}| and on the rest of S
      const int both = ((s & 1u) ? 1 : 0) + ((s & 2u) ? 1 : 0);
      const Coalition key = (s & ~3u) | static_cast<Coalition>(both);
      t.set(s, by_rest[key]);
    }
    const auto psi = shapley::shapley_allocate(t);
    if (std::abs(psi[0] - psi[1]) > 1e-9) ++failures;
  }
  if (failures > after_eff) notes.push_back("symmetry");
  const int after_sym = failures;

  // Dummy and additivity on random real games.
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + rep % 5;
    CharacteristicTable a(n), b(n), sum(n), dummy(n);
    const double d = rv(rng);
    std::vector<double> base(std::size_t{1} << n);
    for (auto& v : base) v = rv(rng);
    base[0] = 0;
    const Coalition last = Coalition{1} << (n - 1);
    for (Coalition s = 1; s <= a.grand(); ++s) {
      const double va = rv(rng), vb = rv(rng);
      a.set(s, va);
      b.set(s, vb);
      sum.set(s, va + vb);
      dummy.set(s, base[s & ~last] + ((s & last) ? d : 0.0));
    }
    const auto pa = shapley::shapley_allocate(a), pb = shapley::shapley_allocate(b), ps = shapley::shapley_allocate(sum);
    for (int i = 0; i < n; ++i)
      if (std::abs(ps[static_cast<std::size_t>(i)] - pa[static_cast<std::size_t>(i)] - pb[static_cast<std::size_t>(i)]) > 1e-9) ++failures;
    if (std::abs(shapley::shapley_allocate(dummy)[static_cast<std::size_t>(n - 1)] - d) > 1e-9) ++failures;
  }
  if (failures > after_sym) notes.push_back("dummy/additivity");

  CharacteristicTable hand(3);
  const double hv[] = {0, 1, 2, 4, 3, 5, 6, 7};
  for (Coalition s = 1; s < 8; ++s) hand.set(s, hv[s]);
  const auto h = shapley::shapley_allocate(hand);
  const bool hand_ok = std::abs(h[0] - 4.0 / 3) < 1e-12 && std::abs(h[1] - 7.0 / 3) < 1e-12 && std::abs(h[2] - 10.0 / 3) < 1e-12;
  if (!hand_ok) notes.push_back("hand case");
  std::string detail = "efficiency (exact integer numerators, n<=7), symmetry, dummy, additivity on 190 games; hand case (" +
                       fmt(h[0], 6) + ", " + fmt(h[1], 6) + ", " + fmt(h[2], 6) + ")";
  for (const auto& s : notes) detail += "; FAILED " + s;
  return {failures == 0 && hand_ok, detail};
}

// ---------------------------------------------------------------------------
// 7. mixer properties

Outcome mixer_properties() {
  std::mt19937_64 rng(707);
  nn::ParamStore store;
  critic::CriticConfig cfg;
  critic::CentralCritic central(store, 3, cfg, rng);
  double worst_sum = 0;
  double min_w = 1;
  long rows = 0;
  for (int ep = 0; ep < 1000; ++ep) {
    nn::Tape t;
    const Matrix states = random_matrix(10, 3 * cfg.obs_size, rng, 2.0);
    const Matrix k = central.mixer().weights(t, store, t.constant(states)).value();
    for (Eigen::Index r = 0; r < k.rows(); ++r, ++rows) {
      worst_sum = std::max(worst_sum, std::abs(k.row(r).sum() - 1.0));
      min_w = std::min(min_w, k.row(r).minCoeff());
    }
  }
  std::uniform_real_distribution<double> u(0, 1);
  int violations = 0;
  for (int k = 0; k < 1000; ++k) {
    const int n = 2 + k % 4;
    const Matrix atoms = random_matrix(n, 32, rng, 3.0);
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = u(rng);
    w /= w.sum();
    Matrix raised = atoms;
    raised.row(k % n) += random_matrix(1, 32, rng).cwiseAbs();
    const double alpha = 0.05 + 0.9 * u(rng);
    if (critic::risk_value(critic::mix(raised, w), alpha) < critic::risk_value(critic::mix(atoms, w), alpha) - 1e-12)
      ++violations;
  }
  const bool pass = rows == 10000 && worst_sum <= 1e-12 && min_w >= 0 && violations == 0;
  return {pass, std::to_string(rows) + " states: max |sum k - 1| " + fmt(worst_sum) + ", min k " + fmt(min_w) +
                    "; monotone violations " + std::to_string(violations) + " / 1000"};
}

// ---------------------------------------------------------------------------
// 8-10. desk-scale training runs

struct DeskRun {
  std::string metrics_csv;
  std::string eval_json;
  double risk = 0;
  double cost = 0;
  double seconds = 0;
};

DeskRun desk_run(trainer::Variant v, std::uint64_t seed, double alpha) {
  auto cfg = config::desk_config();
  cfg.training.variant = v;
  cfg.training.seed = seed;
  cfg.risk.alpha = alpha;
  cfg.training.alpha = alpha;
  cfg.validate();
  const auto t0 = Clock::now();
  const auto built = config::build_scenarios(cfg);
  trainer::Learner learner(cfg.system, cfg.training);
  const auto res = trainer::train(learner, built.train());
  const auto rep = trainer::evaluate(learner, built.test(), alpha, 1);
  DeskRun out;
  out.metrics_csv = res.metrics.to_csv();
  out.eval_json = trainer::to_json(rep).dump();
  out.risk = rep.risk_kwh;
  out.cost = rep.total_cost;
  out.seconds = seconds_since(t0);
  std::cerr << "  desk run " << trainer::to_string(v) << " seed " << seed << " alpha " << alpha << ": risk "
            << fmt(out.risk, 6) << " kWh, cost " << fmt(out.cost, 7) << ", " << fmt(out.seconds, 3) << " s\n";
  return out;
}

constexpr trainer::Variant kRiskVariant = trainer::Variant::r_mappo;
constexpr int kSeeds = 5;

struct DeskResults {
  std::vector<DeskRun> baseline, risk90, risk50;
  DeskRun repeat;
};

const DeskResults& desk_results() {
  static const DeskResults r = [] {
    DeskResults d;
    for (int s = 1; s <= kSeeds; ++s) {
      d.baseline.push_back(desk_run(trainer::Variant::mappo, static_cast<std::uint64_t>(s), 0.9));
      d.risk90.push_back(desk_run(kRiskVariant, static_cast<std::uint64_t>(s), 0.9));
      d.risk50.push_back(desk_run(kRiskVariant, static_cast<std::uint64_t>(s), 0.5));
    }
    d.repeat = desk_run(kRiskVariant, 1, 0.9);
    return d;
  }();
  return r;
}

Outcome desk_risk_reduction() {
  const auto& d = desk_results();
  int wins = 0;
  double slowest = 0;
  std::string per_seed;
  for (int s = 0; s < kSeeds; ++s) {
    const auto& b = d.baseline[static_cast<std::size_t>(s)];
    const auto& r = d.risk90[static_cast<std::size_t>(s)];
    const bool win = r.risk <= 0.5 * b.risk;
    wins += win;
    slowest = std::max({slowest, b.seconds, r.seconds});
    per_seed += (s ? ", " : "") + fmt(r.risk, 4) + "/" + fmt(b.risk, 4);
  }
  const bool pass = wins >= 3 && slowest <= 1800;
  return {pass, trainer::to_string(kRiskVariant) + " vs mappo CVaR_0.9 shed kWh per seed [" + per_seed + "]; " +
                    std::to_string(wins) + "/5 seeds at <= 50% (need 3); slowest run " + fmt(slowest, 3) +
                    " s (limit 1800 s)"};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome alpha_sweep() {
  const auto& d = desk_results();
  std::vector<double> r90, r50, c90, c50;
  for (int s = 0; s < kSeeds; ++s) {
    r90.push_back(d.risk90[static_cast<std::size_t>(s)].risk);
    c90.push_back(d.risk90[static_cast<std::size_t>(s)].cost);
    r50.push_back(d.risk50[static_cast<std::size_t>(s)].risk);
    c50.push_back(d.risk50[static_cast<std::size_t>(s)].cost);
  }
  const double mr90 = median(r90), mr50 = median(r50), mc90 = median(c90), mc50 = median(c50);
  const bool pass = mr90 <= mr50 && mc90 >= mc50;
  return {pass, trainer::to_string(kRiskVariant) + " medians over 5 seeds: risk " + fmt(mr90, 5) + " (alpha 0.9) vs " +
                    fmt(mr50, 5) + " (alpha 0.5) kWh; cost " + fmt(mc90, 7) + " vs " + fmt(mc50, 7)};
}

Outcome determinism() {
  const auto& d = desk_results();
  const auto& a = d.risk90.front();
  const bool csv = a.metrics_csv == d.repeat.metrics_csv;
  const bool json = a.eval_json == d.repeat.eval_json;
  return {csv && json, std::string("seed 1 trained twice: metrics CSV ") + (csv ? "identical" : "DIFFERS") + " (" +
                           std::to_string(a.metrics_csv.size()) + " bytes), eval JSON " +
                           (json ? "identical" : "DIFFERS") + " (" + std::to_string(a.eval_json.size()) + " bytes)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const Criterion all[] = {
      {1, "environment invariants", env_invariants},
      {2, "cvar oracle", cvar_oracle},
      {3, "gradient correctness", gradient_checks},
      {4, "advantage oracle", gae_oracle},
      {5, "baseline vanishing", baseline_vanishes},
      {6, "shapley axioms", shapley_axioms},
      {7, "mixer properties", mixer_properties},
      {8, "desk-scale risk reduction", desk_risk_reduction},
      {9, "alpha-sweep trade-off", alpha_sweep},
      {10, "determinism", determinism},
  };
  std::set<int> only;
  if (const char* env = std::getenv("RISKGRID_ACCEPT_ONLY")) {
    std::stringstream s(env);
    for (std::string tok; std::getline(s, tok, ',');)
      if (!tok.empty()) only.insert(std::stoi(tok));
  }
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << " (" << c.name << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
