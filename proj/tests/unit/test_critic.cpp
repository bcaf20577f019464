#include <doctest.h>

#include "riskgrid/critic.hpp"
#include "riskgrid/errors.hpp"
#include "support/pipelines.hpp"

using namespace riskgrid;
using namespace riskgrid::critic;
using riskgrid::testing::random_matrix;

TEST_CASE("fresh per-agent critic gives finite atoms") {
  ParamStore store;
  std::mt19937_64 rng(1);
  CriticConfig cfg;
  auto q = QuantileCritic::create(store, "critic.0", cfg, rng);
  Tape t;
  const Matrix obs = random_matrix(1, 6, rng);
  const Matrix atoms = q(t, store, t.constant(obs)).value();
  CHECK(atoms.cols() == 32);
  CHECK(atoms.allFinite());
  CHECK(q(t, store, t.constant(obs)).value() == atoms);
}

TEST_CASE("mixing hand cases") {
  Eigen::Matrix<double, 2, 2> atoms;
  atoms << 0, 2, 4, 6;
  const Eigen::RowVectorXd joint = mix(atoms, Eigen::Vector2d(0.5, 0.5));
  CHECK(joint(0) == 2.0);
  CHECK(joint(1) == 4.0);
  CHECK(mix(atoms, Eigen::Vector2d(0, 1)) == atoms.row(1));

  Eigen::MatrixXd same(3, 4);
  same.rowwise() = Eigen::RowVector4d(-1, 0, 3, 5);
  CHECK((mix(same, Eigen::Vector3d(0.2, 0.3, 0.5)) - same.row(0)).norm() < 1e-15);
  CHECK_THROWS_AS(mix(same, Eigen::Vector2d(0.5, 0.5)), ContractViolation);
}

TEST_CASE("mixer weights lie on the simplex") {
  riskgrid::testing::CriticPipeline p(3, 6, 2);
  Tape t;
  const Matrix k = p.central.mixer().weights(t, p.store, t.constant(p.states)).value();
  CHECK(k.rows() == 6);
  CHECK(k.cols() == 3);
  CHECK((k.array() >= 0).all());
  for (Eigen::Index r = 0; r < k.rows(); ++r) CHECK(std::abs(k.row(r).sum() - 1.0) <= 1e-12);
}

TEST_CASE("identical agent contexts give uniform weights") {
  riskgrid::testing::CriticPipeline p(4, 3, 3);
  std::mt19937_64 rng(9);
  const Matrix own = random_matrix(3, 3, rng);
  Matrix states(3, 12);
  for (int i = 0; i < 4; ++i) states.middleCols(i * 3, 3) = own;
  Tape t;
  const Matrix k = p.central.mixer().weights(t, p.store, t.constant(states)).value();
  CHECK((k.array() - 0.25).abs().maxCoeff() < 1e-12);
}

TEST_CASE("a single agent gets weight one") {
  riskgrid::testing::CriticPipeline p(1, 4, 4);
  Tape t;
  const Matrix k = p.central.mixer().weights(t, p.store, t.constant(p.states)).value();
  CHECK((k.array() == 1.0).all());
}

TEST_CASE("risk value is the left tail mean") {
  CHECK(risk_value(Eigen::RowVectorXd::Constant(32, 1.5), 0.9) == 1.5);
  Eigen::RowVectorXd atoms = Eigen::RowVectorXd::LinSpaced(32, 1, 32);
  CHECK(risk_value(atoms, 0.9) == doctest::Approx(2.5));
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const Matrix a = random_matrix(1, 32, rng);
    CHECK(risk_value(a, 0.9) <= a.mean() + 1e-12);
  }
}

TEST_CASE("raising one agent's atoms never lowers the mixed risk value") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const Matrix atoms = random_matrix(3, 8, rng);
    Eigen::Vector3d w(u(rng), u(rng), u(rng));
    w /= w.sum();
    Matrix raised = atoms;
    raised.row(k % 3) += (random_matrix(1, 8, rng).cwiseAbs());
    CHECK(risk_value(mix(raised, w), 0.75) >= risk_value(mix(atoms, w), 0.75) - 1e-12);
  }
}

TEST_CASE("td targets treat the last step as terminal") {
  Matrix target(3, 2);
  target << 1, 2, 3, 4, 5, 6;
  const std::vector<double> r{1.0, -1.0, 0.5};
  const Matrix y = td_targets(r, target, 0.5);
  CHECK(y(0, 0) == 2.5);
  CHECK(y(1, 1) == 2.0);
  CHECK(y(2, 0) == 0.5);
  CHECK(y(2, 1) == 0.5);
}

TEST_CASE("critic loss vanishes at the targets") {
  riskgrid::testing::CriticPipeline p(2, 4, 7);
  p.targets = p.central.joint_values(p.store, p.states);
  Tape t;
  CHECK(p.loss(t, p.store).item() == 0.0);
}

TEST_CASE("critic and mixer match finite differences") {
  riskgrid::testing::CriticPipeline p(2, 3, 8);
  CHECK(riskgrid::testing::check_params([&](Tape& t, ParamStore& s) { return p.joint_projection(t, s); }, p.store) <
        1e-4);
  p.move_targets_off_kinks(1e-3);
  CHECK(riskgrid::testing::check_params([&](Tape& t, ParamStore& s) { return p.loss(t, s); }, p.store) < 1e-3);
}

TEST_CASE("the loss gradient reaches the mixer") {
  riskgrid::testing::CriticPipeline p(2, 3, 9);
  p.store.zero_grad();
  Tape t;
  t.backward(p.loss(t, p.store));
  CHECK(p.store.grad(p.store.index("mixer.u")).norm() > 0);
  CHECK(p.store.grad(p.store.index("mixer.gru.Wz")).norm() > 0);
  CHECK(p.store.grad(p.store.index("critic.1.out.W")).norm() > 0);
}
