#pragma once

#include <vector>

#include "slmm/encoder.hpp"

namespace slmm {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Decoupled-weight-decay Adam over the trainable parameters of one model.
/// Frozen parameters are never touched, not even by the decay term.
class AdamW {
 public:
  AdamW(Encoder& model, AdamWConfig config);

  /// Scales trainable gradients to the configured global norm; returns the
  /// norm before clipping.
  double clip_gradients();
  void step(double lr);
  long steps() const { return steps_; }

 private:
  Encoder& model_;
  AdamWConfig config_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  long steps_ = 0;
};

}  // namespace slmm
