#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace slmm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Per-position validity flags of a padded sequence (1 = real position).
using Mask = std::vector<std::uint8_t>;

/// Numerically stable softmax of one row of logits.
RowVector softmax(const RowVector& logits);

/// log(sum(exp(x))) computed with the max-shift.
double log_sum_exp(const RowVector& logits);

/// Index of the first maximal entry (ties break to the lowest index).
int argmax(const RowVector& values);

/// Row-wise layer normalisation; `gain` and `bias` are 1 x H. `xhat` and
/// `rstd` are filled for the backward pass when non-null.
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  Matrix* xhat, Eigen::VectorXd* rstd);

/// Backward pass of layer_norm; accumulates into the parameter gradients and
/// returns the gradient w.r.t. the input.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                           const Eigen::VectorXd& rstd, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias);

Matrix gelu(const Matrix& x);
Matrix gelu_grad(const Matrix& x);

bool all_finite(const Matrix& m);

}  // namespace slmm
