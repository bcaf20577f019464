#include "riskgrid/neural/ops.hpp"

#include <cmath>

#include "riskgrid/errors.hpp"

namespace riskgrid::nn {

namespace {

Tape& tape_of(Var a) {
  require(a.tape != nullptr, "op on a detached Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  require(a.tape != nullptr && a.tape == b.tape, "op on Vars from different tapes");
  return *a.tape;
}

bool any_grad(const Tape& t, Var a) { return t.requires_grad(a.id); }
bool any_grad(const Tape& t, Var a, Var b) { return t.requires_grad(a.id) || t.requires_grad(b.id); }

void same_shape(Var a, Var b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), what);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), any_grad(t, a, b), [ia = a.id, ib = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require(a.cols() == b.cols(), "matmul_nt: feature dimensions differ");
  Matrix out = a.value() * b.value().transpose();
  return t.push(std::move(out), any_grad(t, a, b), [ia = a.id, ib = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib);
    if (t.requires_grad(ib)) t.grad(ib).noalias() += g.transpose() * t.value(ia);
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().transpose();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    t.grad(ia) += t.grad(self).transpose();
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "add: shape mismatch");
  Matrix out = a.value() + b.value();
  return t.push(std::move(out), any_grad(t, a, b), [ia = a.id, ib = b.id](Tape& t, int self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad(ib) += t.grad(self);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "sub: shape mismatch");
  Matrix out = a.value() - b.value();
  return t.push(std::move(out), any_grad(t, a, b), [ia = a.id, ib = b.id](Tape& t, int self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad(ib) -= t.grad(self);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "mul: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  return t.push(std::move(out), any_grad(t, a, b), [ia = a.id, ib = b.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g.cwiseProduct(t.value(ib));
    if (t.requires_grad(ib)) t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var add_row(Var a, Var r) {
  Tape& t = tape_of(a, r);
  require(r.rows() == 1 && r.cols() == a.cols(), "add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + r.value().row(0);
  return t.push(std::move(out), any_grad(t, a, r), [ia = a.id, ir = r.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia) += g;
    if (t.requires_grad(ir)) t.grad(ir) += g.colwise().sum();
  });
}

Var mul_row(Var a, Var r) {
  Tape& t = tape_of(a, r);
  require(r.rows() == 1 && r.cols() == a.cols(), "mul_row: row shape mismatch");
  Matrix out = a.value().array().rowwise() * r.value().row(0).array();
  return t.push(std::move(out), any_grad(t, a, r), [ia = a.id, ir = r.id](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).array() += g.array().rowwise() * t.value(ir).row(0).array();
    if (t.requires_grad(ir)) t.grad(ir) += g.cwiseProduct(t.value(ia)).colwise().sum();
  });
}

Var scale(Var a, Scalar s) {
  Tape& t = tape_of(a);
  Matrix out = a.value() * s;
  return t.push(std::move(out), any_grad(t, a), [ia = a.id, s](Tape& t, int self) {
    t.grad(ia) += s * t.grad(self);
  });
}

Var add_scalar(Var a, Scalar s) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array() + s;
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    t.grad(ia) += t.grad(self);
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().tanh();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix out = (1.0 + (-a.value().array()).exp()).inverse();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().exp();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    t.grad(ia) += t.grad(self).cwiseProduct(t.value(self));
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array().square();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    t.grad(ia).array() += 2.0 * t.grad(self).array() * t.value(ia).array();
  });
}

Var clamp(Var a, Scalar lo, Scalar hi) {
  Tape& t = tape_of(a);
  require(lo <= hi, "clamp: lo > hi");
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(out), any_grad(t, a), [ia = a.id, lo, hi](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    const Matrix& g = t.grad(self);
    Matrix& gi = t.grad(ia);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const Scalar v = x.data()[k];
      if (v >= lo && v <= hi) gi.data()[k] += g.data()[k];
    }
  });
}

Var minimum(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a, b, "minimum: shape mismatch");
  Matrix out = a.value().cwiseMin(b.value());
  return t.push(std::move(out), any_grad(t, a, b), [ia = a.id, ib = b.id](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    const Matrix& y = t.value(ib);
    const Matrix& g = t.grad(self);
    const bool ga = t.requires_grad(ia);
    const bool gb = t.requires_grad(ib);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      if (x.data()[k] <= y.data()[k]) {
        if (ga) t.grad(ia).data()[k] += g.data()[k];
      } else if (gb) {
        t.grad(ib).data()[k] += g.data()[k];
      }
    }
  });
}

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mx = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - mx).exp();
    out.row(r) /= out.row(r).sum();
  }
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.grad(ia).array() += y.array() * (g.colwise() - dots).array();
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, Scalar eps) {
  Tape& t = tape_of(x, gain);
  require(gain.tape == bias.tape, "layer_norm: Vars from different tapes");
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
          "layer_norm: gain/bias must be 1 x d");
  const Matrix& xv = x.value();
  const auto d = static_cast<Scalar>(xv.cols());
  Matrix xhat(xv.rows(), xv.cols());
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const Scalar mu = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mu).square().sum() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const bool rg = t.requires_grad(x.id) || t.requires_grad(gain.id) || t.requires_grad(bias.id);
  return t.push(std::move(out), rg,
                [ix = x.id, ig = gain.id, ib = bias.id, xhat = std::move(xhat), inv_std = std::move(inv_std),
                 d](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  if (t.requires_grad(ib)) t.grad(ib) += g.colwise().sum();
                  if (t.requires_grad(ig)) t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
                  if (t.requires_grad(ix)) {
                    const Matrix gh = g.array().rowwise() * t.value(ig).row(0).array();
                    for (Eigen::Index r = 0; r < gh.rows(); ++r) {
                      const Scalar m1 = gh.row(r).sum() / d;
                      const Scalar m2 = gh.row(r).dot(xhat.row(r)) / d;
                      t.grad(ix).row(r).array() +=
                          inv_std(r) * (gh.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                  }
                });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    require(p.tape == &t && p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
    rg = rg || t.requires_grad(p.id);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.id, c);
    c += p.cols();
  }
  return t.push(std::move(out), rg, [layout = std::move(layout)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, start] : layout)
      if (t.requires_grad(id)) t.grad(id) += g.middleCols(start, t.value(id).cols());
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    require(p.tape == &t && p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
    rg = rg || t.requires_grad(p.id);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id, r);
    r += p.rows();
  }
  return t.push(std::move(out), rg, [layout = std::move(layout)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, start] : layout)
      if (t.requires_grad(id)) t.grad(id) += g.middleRows(start, t.value(id).rows());
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return t.push(std::move(out), any_grad(t, a), [ia = a.id, start, count](Tape& t, int self) {
    t.grad(ia).middleCols(start, count) += t.grad(self);
  });
}

Var row(Var a, Eigen::Index i) {
  Tape& t = tape_of(a);
  if (i < 0) i += a.rows();
  require(i >= 0 && i < a.rows(), "row: index out of range");
  Matrix out = a.value().row(i);
  return t.push(std::move(out), any_grad(t, a), [ia = a.id, i](Tape& t, int self) {
    t.grad(ia).row(i) += t.grad(self).row(0);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    t.grad(ia).array() += t.grad(self)(0, 0);
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<Scalar>(a.value().size())); }

Var sum_cols(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().rowwise().sum();
  return t.push(std::move(out), any_grad(t, a), [ia = a.id](Tape& t, int self) {
    t.grad(ia).colwise() += t.grad(self).col(0);
  });
}

Var quantile_huber(Var pred, const Matrix& target, std::span<const Scalar> levels, Scalar kappa) {
  Tape& t = tape_of(pred);
  require(kappa > 0, "quantile_huber: kappa must be positive");
  require(target.rows() == pred.rows() && target.cols() == pred.cols(), "quantile_huber: target shape mismatch");
  require(static_cast<Eigen::Index>(levels.size()) == pred.cols(), "quantile_huber: one level per atom");
  const Matrix& p = pred.value();
  const Scalar inv_b = 1.0 / static_cast<Scalar>(p.rows());
  Matrix dpred(p.rows(), p.cols());
  Scalar total = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const Scalar u = target(r, j) - p(r, j);
      const Scalar w = std::abs(levels[static_cast<std::size_t>(j)] - (u < 0 ? 1.0 : 0.0));
      const Scalar au = std::abs(u);
      const Scalar huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
      const Scalar dhuber = au <= kappa ? u : kappa * (u > 0 ? 1.0 : -1.0);
      total += w * huber / kappa;
      dpred(r, j) = -w * dhuber / kappa * inv_b;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total * inv_b;
  return t.push(std::move(out), any_grad(t, pred), [ip = pred.id, dpred = std::move(dpred)](Tape& t, int self) {
    t.grad(ip) += t.grad(self)(0, 0) * dpred;
  });
}

}  // namespace riskgrid::nn
