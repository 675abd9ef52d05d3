#include "slmm/optimizer.hpp"

#include <cmath>

namespace slmm {

AdamW::AdamW(Encoder& model, AdamWConfig config) : model_(model), config_(config) {
  for (const Parameter* p : model_.parameters()) {
    first_moment_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    second_moment_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

double AdamW::clip_gradients() {
  double sq = 0.0;
  auto params = model_.parameters();
  for (const Parameter* p : params) {
    if (p->trainable) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm) {
    const double coef = config_.clip_norm / (norm + 1e-6);
    for (Parameter* p : params) {
      if (p->trainable) p->grad *= coef;
    }
  }
  return norm;
}

void AdamW::step(double lr) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  auto params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    Matrix& m = first_moment_[i];
    Matrix& v = second_moment_[i];
    m = config_.beta1 * m + (1.0 - config_.beta1) * p.grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value *= 1.0 - lr * config_.weight_decay;
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
  }
}

}  // namespace slmm
