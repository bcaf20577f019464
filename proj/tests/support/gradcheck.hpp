#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "riskgrid/neural/ops.hpp"
#include "riskgrid/neural/param_store.hpp"

// Central finite-difference checks for tape gradients. The error of one
// tensor is ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-5);
// the floor keeps structurally zero gradients (pure round-off) from reading as 1;
// the reported figure is the worst tensor.
namespace riskgrid::testing {

using nn::Matrix;
using nn::Var;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline double tensor_error(const Matrix& a, const Matrix& n) {
  const double denom = std::max({a.norm(), n.norm(), 1e-5});
  return (a - n).norm() / denom;
}

// Reduces an arbitrary node to a scalar with fixed random weights so no
// output direction is left unchecked.
inline Var project(nn::Tape& tape, Var v, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return nn::sum(nn::mul(v, tape.constant(random_matrix(v.rows(), v.cols(), rng))));
}

using InputLoss = std::function<Var(nn::Tape&, const std::vector<Var>&)>;

inline double check_inputs(const InputLoss& f, std::vector<Matrix> inputs, double h = 1e-5) {
  nn::Tape tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.input(m));
  tape.backward(f(tape, vars));
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Matrix> moved = inputs;
        moved[k].data()[i] += delta;
        nn::Tape t;
        std::vector<Var> vs;
        for (const auto& m : moved) vs.push_back(t.constant(m));
        return f(t, vs).item();
      };
      numeric.data()[i] = (eval(h) - eval(-h)) / (2 * h);
    }
    worst = std::max(worst, tensor_error(tape.grad(vars[k]), numeric));
  }
  return worst;
}

using StoreLoss = std::function<Var(nn::Tape&, nn::ParamStore&)>;

inline double check_params(const StoreLoss& f, nn::ParamStore& store, double h = 1e-5) {
  store.zero_grad();
  {
    nn::Tape tape;
    tape.backward(f(tape, store));
  }
  double worst = 0;
  for (std::size_t p = 0; p < store.size(); ++p) {
    const Matrix analytic = store.grad(p);
    Matrix numeric(analytic.rows(), analytic.cols());
    Matrix& value = store.value(p);
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double keep = value.data()[i];
      value.data()[i] = keep + h;
      nn::Tape t1;
      const double up = f(t1, store).item();
      value.data()[i] = keep - h;
      nn::Tape t2;
      const double down = f(t2, store).item();
      value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    worst = std::max(worst, tensor_error(analytic, numeric));
  }
  store.zero_grad();
  return worst;
}

}  // namespace riskgrid::testing
