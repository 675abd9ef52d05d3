#include "slmm/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace slmm {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

RowVector softmax(const RowVector& logits) {
  const double shift = logits.maxCoeff();
  RowVector out = (logits.array() - shift).exp().matrix();
  // subnormal tails slow every later product by orders of magnitude
  out = out.unaryExpr([](double v) { return v < std::numeric_limits<double>::min() ? 0.0 : v; });
  out /= out.sum();
  return out;
}

double log_sum_exp(const RowVector& logits) {
  const double shift = logits.maxCoeff();
  return shift + std::log((logits.array() - shift).exp().sum());
}

int argmax(const RowVector& values) {
  int best = 0;
  for (int i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  Matrix* xhat, Eigen::VectorXd* rstd) {
  const auto rows = x.rows();
  const auto cols = static_cast<double>(x.cols());
  Matrix normed(rows, x.cols());
  Eigen::VectorXd inv(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).sum() / cols;
    const double var = (x.row(r).array() - mean).square().sum() / cols;
    inv[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    normed.row(r) = (x.row(r).array() - mean) * inv[r];
  }
  Matrix y = (normed.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  if (xhat != nullptr) *xhat = std::move(normed);
  if (rstd != nullptr) *rstd = std::move(inv);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                           const Eigen::VectorXd& rstd, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  dgain.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  const double cols = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() / cols;
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / cols;
    dx.row(r) = rstd[r] * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
  }
  return dx;
}

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
}

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + v * pdf;
  });
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace slmm
