#include <doctest.h>

#include <cmath>
#include <numbers>

#include "riskgrid/agent.hpp"
#include "riskgrid/errors.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace riskgrid;
using namespace riskgrid::agent;
using riskgrid::testing::random_matrix;

TEST_CASE("mean actions are deterministic and inside the box") {
  ParamStore store;
  std::mt19937_64 rng(1);
  ActorPolicy pi(store, 2, 8, 16, rng);
  const nn::RowVector f = random_matrix(1, 8, rng, 3.0);
  const auto a = pi.act(store, 1, f, Mode::mean, rng);
  const auto b = pi.act(store, 1, f, Mode::mean, rng);
  CHECK(a.u == b.u);
  CHECK(a.u.cwiseAbs().maxCoeff() <= 1.0);
  CHECK_THROWS_AS(pi.act(store, 2, f, Mode::mean, rng), ContractViolation);
}

TEST_CASE("sampled log probability matches the closed form") {
  ParamStore store;
  std::mt19937_64 rng(2);
  ActorPolicy pi(store, 1, 4, 8, rng, -0.7);
  const nn::RowVector f = random_matrix(1, 4, rng);
  const auto s = pi.act(store, 0, f, Mode::sample, rng);
  const auto m = pi.act(store, 0, f, Mode::mean, rng);
  const double sd = std::exp(-0.7);
  double lp = 0;
  for (int j = 0; j < 2; ++j) {
    const double z = (s.u(j) - m.u(j)) / sd;
    lp += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * std::numbers::pi);
  }
  CHECK(s.log_prob == doctest::Approx(lp).epsilon(1e-12));

  nn::Tape t;
  const Matrix u = s.u;
  const double var_lp =
      gaussian_log_prob(t.constant(u), t.constant(Matrix(m.u)), t.constant(Matrix::Constant(1, 2, -0.7))).item();
  CHECK(var_lp == doctest::Approx(lp).epsilon(1e-12));
}

TEST_CASE("gaussian log probability and entropy match finite differences") {
  std::mt19937_64 rng(3);
  const Matrix u = random_matrix(5, 2, rng);
  CHECK(riskgrid::testing::check_inputs(
            [&](nn::Tape& t, const std::vector<nn::Var>& v) {
              return riskgrid::testing::project(t, gaussian_log_prob(t.constant(u), v[0], v[1]));
            },
            {random_matrix(5, 2, rng), random_matrix(1, 2, rng, 0.3)}) < 1e-4);
  nn::Tape t;
  const double h = gaussian_entropy(t.constant(Matrix::Constant(1, 2, 0.0))).item();
  CHECK(h == doctest::Approx(1.0 + std::log(2 * std::numbers::pi)));
}

TEST_CASE("physical mapping spans the device ranges") {
  env::MicrogridParams mg;
  const auto lo = to_physical(Eigen::RowVector2d(-1, -1), mg);
  const auto hi = to_physical(Eigen::RowVector2d(1, 1), mg);
  CHECK(lo.p_es == -200.0);
  CHECK(lo.p_mt == 0.0);
  CHECK(hi.p_es == 200.0);
  CHECK(hi.p_mt == 300.0);
  CHECK(to_physical(Eigen::RowVector2d(0, 0), mg).p_mt == 150.0);
}

TEST_CASE("advantage estimation hand cases") {
  const std::vector<double> r1{1.0}, v1{0.0};
  CHECK(gae(r1, v1, 0.99, 0.95)[0] == 1.0);

  const std::vector<double> r{1.0, -2.0, 0.5}, v{0.3, 0.1, -0.4};
  const auto a = gae(r, v, 0.9, 0.0);
  CHECK(a[0] == doctest::Approx(1.0 + 0.9 * 0.1 - 0.3));
  CHECK(a[1] == doctest::Approx(-2.0 + 0.9 * -0.4 - 0.1));
  CHECK(a[2] == doctest::Approx(0.5 + 0.4));

  // Constant value, zero reward: delta is (gamma - 1) V except at the end (-V).
  const double V = 2.0, g = 0.9, l = 0.8;
  const std::vector<double> zero(5, 0.0), cv(5, V);
  const auto c = gae(zero, cv, g, l);
  for (int t = 0; t < 5; ++t) {
    const int rest = 5 - t;
    double expect = (g - 1) * V * (1 - std::pow(g * l, rest - 1)) / (1 - g * l);
    expect += std::pow(g * l, rest - 1) * -V;
    CHECK(c[static_cast<std::size_t>(t)] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gae(r, r1, 0.9, 0.9), ContractViolation);
}

TEST_CASE("advantage recursion matches the double sum") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> len(1, 16);
  std::uniform_real_distribution<double> u(-1, 1), unit(0, 1);
  for (int k = 0; k < 50; ++k) {
    const int T = len(rng);
    std::vector<double> r(static_cast<std::size_t>(T)), v(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      r[static_cast<std::size_t>(t)] = u(rng);
      v[static_cast<std::size_t>(t)] = u(rng);
    }
    const double g = unit(rng), l = unit(rng);
    const auto a = gae(r, v, g, l);
    const auto o = riskgrid::testing::gae_double_sum(r, v, g, l);
    for (int t = 0; t < T; ++t) CHECK(std::abs(a[static_cast<std::size_t>(t)] - o[static_cast<std::size_t>(t)]) <= 1e-12);
  }
}

TEST_CASE("clipped surrogate hand cases") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(1.0, 3.0, 0.2) == 3.0);

  nn::Tape t;
  const Matrix lp = Matrix::Constant(3, 1, -1.3);
  Matrix adv(3, 1);
  adv << 1, -2, 4;
  CHECK(ppo_surrogate(t.constant(lp), lp, adv, 0.2).item() == doctest::Approx(1.0));
}

TEST_CASE("clipped region has no gradient") {
  nn::Tape t;
  const Matrix old = Matrix::Zero(2, 1);
  Matrix adv(2, 1);
  adv << 1.0, -1.0;
  Matrix lp(2, 1);
  lp << std::log(1.5), std::log(0.5);
  const nn::Var x = t.input(lp);
  t.backward(ppo_surrogate(x, old, adv, 0.2));
  CHECK(t.grad(x).norm() == 0.0);
}

TEST_CASE("advantage normalization") {
  std::vector<double> a{1, 2, 3, 4};
  normalize(a);
  double m = 0, s = 0;
  for (double x : a) m += x;
  for (double x : a) s += x * x;
  CHECK(std::abs(m) < 1e-12);
  CHECK(s / 4 == doctest::Approx(1.0));
  std::vector<double> c{5, 5};
  normalize(c);
  CHECK(c[0] == 0.0);
}

TEST_CASE("rollout buffer enforces contiguous episodes") {
  RolloutBuffer buf(4);
  Transition tr;
  tr.t = 1;
  CHECK_THROWS_AS(buf.push(tr), ContractViolation);
  tr.t = 0;
  buf.push(tr);
  tr.t = 2;
  CHECK_THROWS_AS(buf.push(tr), ContractViolation);
  tr.t = 1;
  tr.done = true;
  buf.push(tr);
  tr.t = 0;
  tr.done = false;
  buf.push(tr);
  CHECK(buf.episodes().size() == 1);
  CHECK(buf.episodes()[0].second == 2);
  tr.t = 1;
  buf.push(tr);
  CHECK(buf.full());
  CHECK_THROWS_AS(buf.push(tr), ContractViolation);
}

TEST_CASE("score function times a state-only baseline averages to zero") {
  ParamStore store;
  std::mt19937_64 rng(5);
  ActorPolicy pi(store, 1, 3, 6, rng);
  const nn::RowVector f = random_matrix(1, 3, rng);
  const double baseline = 7.3;
  const int n = 20000;
  nn::Tape t;
  const Matrix mu = pi.mean(t, store, 0, t.constant(f)).value();
  const Matrix ls = pi.log_std(t, store, 0).value();
  Eigen::RowVector2d sum = Eigen::RowVector2d::Zero(), sq = Eigen::RowVector2d::Zero();
  for (int k = 0; k < n; ++k) {
    const auto s = pi.act(store, 0, f, Mode::sample, rng);
    // d log pi / d mean = (u - mean) / sd^2
    const Eigen::RowVector2d g = (s.u - Eigen::RowVector2d(mu)).cwiseQuotient(Eigen::RowVector2d(ls).array().exp().square().matrix()) * baseline;
    sum += g;
    sq += g.cwiseProduct(g);
  }
  const Eigen::RowVector2d m = sum / n;
  const Eigen::RowVector2d se = ((sq / n - m.cwiseProduct(m)) / n).cwiseSqrt();
  CHECK(std::abs(m(0)) <= 3 * se(0));
  CHECK(std::abs(m(1)) <= 3 * se(1));
}
