#include "riskgrid/neural/tape.hpp"

#include "riskgrid/errors.hpp"
#include "riskgrid/neural/param_store.hpp"

namespace riskgrid::nn {

const Matrix& Var::value() const { return tape->value(id); }

Scalar Var::item() const {
  const Matrix& v = value();
  require(v.size() == 1, "Var::item on a non-scalar node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(ParamStore& store, std::size_t index) {
  auto& per_store = param_nodes_[&store];
  if (auto it = per_store.find(index); it != per_store.end()) return {this, it->second};
  Node n;
  n.ref = &store.value(index);
  n.requires_grad = true;
  n.store = &store;
  n.param = index;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  per_store.emplace(index, id);
  return {this, id};
}

Var Tape::push(Matrix value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.ref ? *n.ref : n.value;
}

void Tape::backward(Var loss) {
  require(loss.tape == this && loss.id >= 0 && loss.id < static_cast<int>(nodes_.size()),
          "backward: loss does not belong to this tape");
  require(value(loss.id).size() == 1, "backward: loss must be a scalar");
  require(!backward_done_, "backward: tape already consumed");
  require(nodes_[loss.id].requires_grad, "backward: loss does not depend on any parameter");
  backward_done_ = true;

  for (int i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      const Matrix& v = value(i);
      n.grad.setZero(v.rows(), v.cols());
    }
  }
  nodes_[loss.id].grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.store) n.store->grad(n.param) += n.grad;
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
  backward_done_ = false;
}

}  // namespace riskgrid::nn
