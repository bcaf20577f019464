#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "riskgrid/neural/ops.hpp"
#include "riskgrid/neural/param_store.hpp"

// Layers are index bundles into a ParamStore. The store is passed at call
// time so one layer description can run against a live store and against a
// frozen copy with the same layout (target networks).
namespace riskgrid::nn {

struct ModelDims {
  Eigen::Index d_model = 64;
  Eigen::Index heads = 4;
  Eigen::Index hidden = 64;

  Eigen::Index d_k() const { return d_model / heads; }
  void validate() const;
};

struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  bool has_bias = true;
  Eigen::Index in = 0;
  Eigen::Index out = 0;

  static Linear create(ParamStore& store, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                       std::mt19937_64& rng, bool with_bias = true);
  /// x: n x in  ->  n x out, computing x W + b.
  Var operator()(Tape& tape, ParamStore& store, Var x) const;
};

struct LayerNorm {
  std::size_t gain = 0;
  std::size_t bias = 0;
  Scalar eps = 1e-5;

  static LayerNorm create(ParamStore& store, const std::string& prefix, Eigen::Index dim, Scalar eps = 1e-5);
  Var operator()(Tape& tape, ParamStore& store, Var x) const;
};

struct AttentionOutput {
  Var out;
  Var weights;
};

/// softmax(Q K^T / sqrt(d_k)) V with Q: Lq x d_k, K and V: Lk x d_k.
AttentionOutput attention(Var q, Var k, Var v);

/// H-head attention over one sequence: Concat(head_1..head_H) W_O with
/// head_h = Attention(X W_h^Q, X W_h^K, X W_h^V).
struct MultiHead {
  std::vector<std::size_t> wq, wk, wv;
  std::size_t wo = 0;
  Eigen::Index d_model = 0;
  Eigen::Index heads = 0;

  static MultiHead create(ParamStore& store, const std::string& prefix, const ModelDims& dims,
                          std::mt19937_64& rng);
  Var operator()(Tape& tape, ParamStore& store, Var x) const;
};

/// Gated recurrent unit with update gate z, reset gate r and tanh candidate:
///   z = s(x Wz + h Uz + bz), r = s(x Wr + h Ur + br)
///   n = tanh(x Wn + r * (h Un) + bn),  h' = (1 - z) * n + z * h
struct GRU {
  std::size_t wz = 0, uz = 0, bz = 0;
  std::size_t wr = 0, ur = 0, br = 0;
  std::size_t wn = 0, un = 0, bn = 0;
  Eigen::Index in = 0;
  Eigen::Index hidden = 0;

  static GRU create(ParamStore& store, const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
                    std::mt19937_64& rng);
  Var cell(Tape& tape, ParamStore& store, Var x, Var h) const;
  /// Runs the recurrence over `inputs` (each 1 x in) and returns every hidden.
  std::vector<Var> sequence(Tape& tape, ParamStore& store, std::span<const Var> inputs, Var h0) const;
  /// Final hidden after the whole sequence.
  Var run(Tape& tape, ParamStore& store, std::span<const Var> inputs, Var h0) const;
};

}  // namespace riskgrid::nn
