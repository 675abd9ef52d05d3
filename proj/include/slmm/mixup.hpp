#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "slmm/encoder.hpp"
#include "slmm/rng.hpp"
#include "slmm/softlabel.hpp"

namespace slmm {

struct MixupConfig {
  double alpha = 2.0;
  int n_mix = -1;  // interpolation layer; -1 means T - 1

  int layer(int num_layers) const { return n_mix < 0 ? num_layers - 1 : n_mix; }
  void validate(int num_layers) const;
};

struct MixupPair {
  std::size_t first = 0;
  std::size_t second = 0;
};

/// Different-class pairs drawn from one batch and their mixing coefficients.
struct MixupBatch {
  std::vector<MixupPair> pairs;
  std::vector<double> lambdas;

  std::size_t size() const { return pairs.size(); }
};

/// Pairs item i with item perm(i) for a uniform random permutation and drops
/// self pairs and same-label pairs. Lambdas are left empty.
MixupBatch pair_by_shuffle(std::span<const int> labels, Rng& rng);

/// One draw from Beta(alpha, alpha).
double sample_lambda(double alpha, Rng& rng);

/// Fills batch.lambdas with one draw per pair, in pair order.
void draw_lambdas(MixupBatch& batch, double alpha, Rng& rng);

/// lambda * a + (1 - lambda) * b over equal-shape states; valid positions are
/// the union of both masks.
std::pair<Matrix, Mask> interpolate_states(const Matrix& a, const Mask& mask_a, const Matrix& b,
                                           const Mask& mask_b, double lambda);

/// Interpolates two single-sequence hidden states taken at layer n_mix,
/// forwards the mix through layers n_mix+1..T, pools and applies the intent
/// head.
RowVector mixup_forward(const Encoder& model, const HiddenStates& first, const HiddenStates& second,
                        double lambda, int n_mix);

/// Mean cross-entropy of every row against the open class (the last column).
LossWithGrad mixup_loss(const Matrix& logits);

}  // namespace slmm
