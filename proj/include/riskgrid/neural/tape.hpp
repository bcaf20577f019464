#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

namespace riskgrid::nn {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

class ParamStore;
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive and not cleared.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar item() const;
};

/// Reverse-mode gradient tape over row-major matrices.
///
/// Every node stores its forward value; nodes that depend on a parameter or a
/// differentiable input also carry a gradient buffer and a closure that
/// pushes the node's gradient to its inputs. Parameter leaves reference the
/// value held in a ParamStore and write their gradient back there on
/// backward(), so one tape can span several stores.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable leaf.
  Var constant(Matrix value);
  /// Differentiable leaf whose gradient can be read after backward().
  Var input(Matrix value);
  /// Leaf bound to parameter `index` of `store`. Repeated calls return the
  /// same node.
  Var param(ParamStore& store, std::size_t index);

  /// Records an op result. `fn` is only kept when `requires_grad` is set.
  Var push(Matrix value, bool requires_grad, BackwardFn fn);

  const Matrix& value(int id) const;
  /// Gradient buffer of a node; allocated (zeroed) by backward().
  Matrix& grad(int id) { return nodes_[id].grad; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// differentiable leaf and into the bound parameter stores.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    BackwardFn backward;
    bool requires_grad = false;
    ParamStore* store = nullptr;
    std::size_t param = 0;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const ParamStore*, std::unordered_map<std::size_t, int>> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace riskgrid::nn
