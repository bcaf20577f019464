#pragma once

#include <span>
#include <vector>

#include "riskgrid/neural/tape.hpp"

// Differentiable primitives over Var. Shapes follow the row-major convention:
// a sequence of L feature vectors is an L x d matrix, a single vector is 1 x d.
namespace riskgrid::nn {

Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// Adds a 1 x c row to every row of an r x c matrix.
Var add_row(Var a, Var row);
/// Multiplies every row of `a` elementwise by a 1 x c row.
Var mul_row(Var a, Var row);
Var scale(Var a, Scalar s);
Var add_scalar(Var a, Scalar s);
Var neg(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var square(Var a);
/// Elementwise clamp; the gradient is zero where the bound is active.
Var clamp(Var a, Scalar lo, Scalar hi);
/// Elementwise minimum; ties send the gradient to `a`.
Var minimum(Var a, Var b);

/// Row-wise softmax.
Var softmax_rows(Var a);
/// Normalizes every row to mean 0 / variance 1, then applies gain and bias rows.
Var layer_norm_rows(Var x, Var gain, Var bias, Scalar eps = 1e-5);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var row(Var a, Eigen::Index i);

/// Sum of all entries as a 1 x 1 node.
Var sum(Var a);
Var mean(Var a);
/// r x c -> r x 1.
Var sum_cols(Var a);

/// Quantile-Huber loss summed over atoms and averaged over rows:
///   (1/B) * sum_{b,j} |v_j - 1{u<0}| * L_kappa(u) / kappa,  u = target - pred.
/// `target` is treated as a constant; `levels` has one entry per column.
Var quantile_huber(Var pred, const Matrix& target, std::span<const Scalar> levels, Scalar kappa);

}  // namespace riskgrid::nn
