#pragma once

#include <span>
#include <vector>

#include "slmm/tensor.hpp"

namespace slmm {

/// Softened (K+1)-way target: 1 - xi on the gold class, xi on the open class.
struct SoftLabelDistribution {
  std::vector<double> probs;
  double xi = 0.0;
};

/// A scalar batch loss with its gradient w.r.t. the logits (one row per item).
struct LossWithGrad {
  double value = 0.0;
  Matrix grad;
};

/// `gold` is a 1-based known-class id. xi >= 0.5 is allowed (see
/// soft_label_mass_warning) so that sweeps can go past it.
SoftLabelDistribution soften(int gold, int num_known, double xi);

/// True when xi lets the open class outweigh the gold class.
bool soft_label_mass_warning(double xi);

/// Batch mean of KL(p || softmax(logits)) with 0 log 0 = 0. The gradient is
/// (softmax(logits) - p) / batch.
LossWithGrad kl_loss(std::span<const SoftLabelDistribution> targets, const Matrix& logits);

/// Batch mean cross-entropy against 0-based class indices.
LossWithGrad cross_entropy(std::span<const int> targets, const Matrix& logits);

}  // namespace slmm
