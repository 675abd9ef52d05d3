#include "slmm/softlabel.hpp"

#include <cmath>
#include <string>

#include "slmm/error.hpp"

namespace slmm {

SoftLabelDistribution soften(int gold, int num_known, double xi) {
  if (num_known < 1) throw ConfigError("soften needs K >= 1");
  if (gold == num_known + 1) {
    throw ConfigError("soft labels apply to known-class samples only");
  }
  if (gold < 1 || gold > num_known) {
    throw ConfigError("gold class " + std::to_string(gold) + " outside 1..K");
  }
  if (!(xi >= 0.0 && xi < 1.0)) throw ConfigError("xi must lie in [0, 1)");
  SoftLabelDistribution dist;
  dist.xi = xi;
  dist.probs.assign(static_cast<std::size_t>(num_known) + 1, 0.0);
  dist.probs[static_cast<std::size_t>(gold - 1)] = 1.0 - xi;
  dist.probs.back() += xi;
  return dist;
}

bool soft_label_mass_warning(double xi) { return xi >= 0.5; }

LossWithGrad kl_loss(std::span<const SoftLabelDistribution> targets, const Matrix& logits) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows() || targets.empty()) {
    throw ConfigError("kl_loss: target and logit batch sizes differ");
  }
  if (!logits.allFinite()) throw TrainingError("kl_loss: non-finite logits");
  LossWithGrad out;
  out.grad.resize(logits.rows(), logits.cols());
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const auto& p = targets[static_cast<std::size_t>(i)].probs;
    if (static_cast<Eigen::Index>(p.size()) != logits.cols()) {
      throw ConfigError("kl_loss: distribution width differs from logit width");
    }
    const RowVector row = logits.row(i);
    const double lse = log_sum_exp(row);
    double kl = 0.0;
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      const double pc = p[static_cast<std::size_t>(c)];
      if (pc > 0.0) kl += pc * (std::log(pc) - (row[c] - lse));
    }
    out.value += kl * inv_batch;
    const RowVector q = softmax(row);
    for (Eigen::Index c = 0; c < row.size(); ++c) {
      out.grad(i, c) = (q[c] - p[static_cast<std::size_t>(c)]) * inv_batch;
    }
  }
  return out;
}

LossWithGrad cross_entropy(std::span<const int> targets, const Matrix& logits) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows() || targets.empty()) {
    throw ConfigError("cross_entropy: target and logit batch sizes differ");
  }
  if (!logits.allFinite()) throw TrainingError("cross_entropy: non-finite logits");
  LossWithGrad out;
  out.grad.resize(logits.rows(), logits.cols());
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= logits.cols()) throw ConfigError("cross_entropy: target out of range");
    const RowVector row = logits.row(i);
    out.value += (log_sum_exp(row) - row[t]) * inv_batch;
    RowVector g = softmax(row);
    g[t] -= 1.0;
    out.grad.row(i) = g * inv_batch;
  }
  return out;
}

}  // namespace slmm
