#include "slmm/mixup.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "slmm/error.hpp"

namespace slmm {

void MixupConfig::validate(int num_layers) const {
  if (!(alpha > 0.0)) throw ConfigError("mixup alpha must be > 0");
  const int n = layer(num_layers);
  if (n < 1 || n >= num_layers) {
    throw ConfigError("n_mix must satisfy 1 <= n_mix < T (got " + std::to_string(n) + ")");
  }
}

MixupBatch pair_by_shuffle(std::span<const int> labels, Rng& rng) {
  std::vector<std::size_t> perm(labels.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  MixupBatch batch;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const std::size_t j = perm[i];
    if (i == j || labels[i] == labels[j]) continue;
    batch.pairs.push_back({i, j});
  }
  return batch;
}

double sample_lambda(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("Beta parameter alpha must be > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  const double total = x + y;
  // both draws can underflow to zero for tiny alpha, where Beta mass sits at the ends
  if (total <= 0.0) return std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0;
  return std::clamp(x / total, 0.0, 1.0);
}

void draw_lambdas(MixupBatch& batch, double alpha, Rng& rng) {
  batch.lambdas.clear();
  batch.lambdas.reserve(batch.pairs.size());
  for (std::size_t i = 0; i < batch.pairs.size(); ++i) batch.lambdas.push_back(sample_lambda(alpha, rng));
}

std::pair<Matrix, Mask> interpolate_states(const Matrix& a, const Mask& mask_a, const Matrix& b,
                                           const Mask& mask_b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (a.rows() != b.rows() || a.cols() != b.cols() || mask_a.size() != mask_b.size()) {
    throw ConfigError("mixup partners must be padded to the same length");
  }
  Mask mask(mask_a.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (mask_a[i] != 0 || mask_b[i] != 0) ? 1 : 0;
  Matrix mixed = lambda * a + (1.0 - lambda) * b;
  return {std::move(mixed), std::move(mask)};
}

RowVector mixup_forward(const Encoder& model, const HiddenStates& first, const HiddenStates& second,
                        double lambda, int n_mix) {
  if (first.batch() != 1 || second.batch() != 1) {
    throw ConfigError("mixup_forward takes one sequence per side");
  }
  MixupConfig{1.0, n_mix}.validate(model.num_layers());
  auto [mixed, mask] = interpolate_states(first.values[0], first.masks[0], second.values[0],
                                          second.masks[0], lambda);
  HiddenStates h;
  h.values.push_back(std::move(mixed));
  h.masks.push_back(std::move(mask));
  const HiddenStates top = model.forward_layers(h, n_mix, model.num_layers());
  return model.intent_head(mean_pool(top.values[0], top.masks[0]));
}

LossWithGrad mixup_loss(const Matrix& logits) {
  if (logits.rows() == 0) throw ConfigError("mixup_loss needs at least one pseudo sample");
  std::vector<int> targets(static_cast<std::size_t>(logits.rows()), static_cast<int>(logits.cols()) - 1);
  return cross_entropy(targets, logits);
}

}  // namespace slmm
