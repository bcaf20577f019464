#include "riskgrid/neural/layers.hpp"

#include <cmath>

#include "riskgrid/errors.hpp"

namespace riskgrid::nn {

void ModelDims::validate() const {
  if (d_model <= 0 || heads <= 0 || hidden <= 0) throw ConfigError("model dims must be positive");
  if (d_model % heads != 0) throw ConfigError("d_model must be divisible by the number of heads");
}

Linear Linear::create(ParamStore& store, const std::string& prefix, Eigen::Index in, Eigen::Index out,
                      std::mt19937_64& rng, bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = with_bias;
  l.weight = store.add_uniform(prefix + ".W", in, out, in, rng);
  if (with_bias) l.bias = store.add_uniform(prefix + ".b", 1, out, in, rng);
  return l;
}

Var Linear::operator()(Tape& tape, ParamStore& store, Var x) const {
  require(x.cols() == in, "Linear: input width mismatch");
  Var y = matmul(x, tape.param(store, weight));
  return has_bias ? add_row(y, tape.param(store, bias)) : y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& prefix, Eigen::Index dim, Scalar eps) {
  LayerNorm ln;
  ln.eps = eps;
  ln.gain = store.add(prefix + ".gain", Matrix::Ones(1, dim));
  ln.bias = store.add(prefix + ".bias", Matrix::Zero(1, dim));
  return ln;
}

Var LayerNorm::operator()(Tape& tape, ParamStore& store, Var x) const {
  return layer_norm_rows(x, tape.param(store, gain), tape.param(store, bias), eps);
}

AttentionOutput attention(Var q, Var k, Var v) {
  require(q.cols() == k.cols(), "attention: query/key width mismatch");
  require(k.rows() == v.rows(), "attention: key/value length mismatch");
  const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(q.cols()));
  Var w = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk));
  return {matmul(w, v), w};
}

MultiHead MultiHead::create(ParamStore& store, const std::string& prefix, const ModelDims& dims,
                            std::mt19937_64& rng) {
  dims.validate();
  MultiHead mh;
  mh.d_model = dims.d_model;
  mh.heads = dims.heads;
  const Eigen::Index dk = dims.d_k();
  for (Eigen::Index h = 0; h < dims.heads; ++h) {
    const std::string p = prefix + ".h" + std::to_string(h);
    mh.wq.push_back(store.add_uniform(p + ".Wq", dims.d_model, dk, dims.d_model, rng));
    mh.wk.push_back(store.add_uniform(p + ".Wk", dims.d_model, dk, dims.d_model, rng));
    mh.wv.push_back(store.add_uniform(p + ".Wv", dims.d_model, dk, dims.d_model, rng));
  }
  mh.wo = store.add_uniform(prefix + ".Wo", dims.heads * dk, dims.d_model, dims.heads * dk, rng);
  return mh;
}

Var MultiHead::operator()(Tape& tape, ParamStore& store, Var x) const {
  require(x.cols() == d_model, "MultiHead: input width mismatch");
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::size_t h = 0; h < wq.size(); ++h) {
    Var q = matmul(x, tape.param(store, wq[h]));
    Var k = matmul(x, tape.param(store, wk[h]));
    Var v = matmul(x, tape.param(store, wv[h]));
    outs.push_back(attention(q, k, v).out);
  }
  Var cat = outs.size() == 1 ? outs.front() : concat_cols(outs);
  return matmul(cat, tape.param(store, wo));
}

GRU GRU::create(ParamStore& store, const std::string& prefix, Eigen::Index in, Eigen::Index hidden,
                std::mt19937_64& rng) {
  GRU g;
  g.in = in;
  g.hidden = hidden;
  auto gate = [&](const char* n, std::size_t& w, std::size_t& u, std::size_t& b) {
    w = store.add_uniform(prefix + ".W" + n, in, hidden, hidden, rng);
    u = store.add_uniform(prefix + ".U" + n, hidden, hidden, hidden, rng);
    b = store.add_uniform(prefix + ".b" + n, 1, hidden, hidden, rng);
  };
  gate("z", g.wz, g.uz, g.bz);
  gate("r", g.wr, g.ur, g.br);
  gate("n", g.wn, g.un, g.bn);
  return g;
}

Var GRU::cell(Tape& tape, ParamStore& store, Var x, Var h) const {
  require(x.cols() == in && h.cols() == hidden, "GRU: width mismatch");
  auto p = [&](std::size_t i) { return tape.param(store, i); };
  Var z = sigmoid(add_row(add(matmul(x, p(wz)), matmul(h, p(uz))), p(bz)));
  Var r = sigmoid(add_row(add(matmul(x, p(wr)), matmul(h, p(ur))), p(br)));
  Var n = tanh(add_row(add(matmul(x, p(wn)), mul(r, matmul(h, p(un)))), p(bn)));
  // h' = n + z * (h - n)
  return add(n, mul(z, sub(h, n)));
}

std::vector<Var> GRU::sequence(Tape& tape, ParamStore& store, std::span<const Var> inputs, Var h0) const {
  require(!inputs.empty(), "GRU: empty input sequence");
  std::vector<Var> hs;
  hs.reserve(inputs.size());
  Var h = h0;
  for (const Var& x : inputs) {
    h = cell(tape, store, x, h);
    hs.push_back(h);
  }
  return hs;
}

Var GRU::run(Tape& tape, ParamStore& store, std::span<const Var> inputs, Var h0) const {
  return sequence(tape, store, inputs, h0).back();
}

}  // namespace riskgrid::nn
