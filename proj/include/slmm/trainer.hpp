#pragma once

#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "slmm/data.hpp"
#include "slmm/encoder.hpp"

namespace slmm {

struct TrainConfig {
  double xi = 0.3;     // open-class mass of the soft labels
  double mu = 0.3;     // weight of the soft-label loss against the mixup loss
  double alpha = 2.0;  // Beta(alpha, alpha) for the mixing coefficient
  int n_mix = -1;      // interpolation layer, -1 = T - 1
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 10;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  bool disable_sl = false;  // forces xi = 0
  bool disable_mm = false;  // drops the mixup loss
  bool verbose = false;     // progress lines on stderr

  double effective_xi() const { return disable_sl ? 0.0 : xi; }
  void validate() const;
  nlohmann::json to_json() const;
  /// Overwrites the fields present in `doc`.
  void merge_json(const nlohmann::json& doc);
};

struct StepRecord {
  double loss_main = 0.0;  // L_P in pretraining, L_S in open training
  double loss_mix = 0.0;   // L_M, 0 when no pairs survived
  double loss_total = 0.0;
  int mixup_pairs = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss_main = 0.0;
  double loss_mix = 0.0;
  double loss_total = 0.0;
  double val_metric = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  std::string stage;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  int best_epoch = 0;  // 1-based
  int stop_epoch = 0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Linear warmup from 0 to cfg.lr over the first ceil(warmup_fraction * total)
/// steps, then linear decay to 0 at total_steps.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

/// True once the best value is at least `patience` epochs old. Ties keep the
/// earliest epoch as the best.
bool should_stop(std::span<const double> history, int patience);

/// Validation outcome of one epoch: higher metric wins. Exact metric ties go
/// to the earliest epoch, or to the lower loss when `loss_breaks_ties`.
struct ValidationScore {
  double metric = 0.0;
  double loss = 0.0;
};

bool improves(const ValidationScore& candidate, const ValidationScore& incumbent,
              bool loss_breaks_ties);
std::size_t best_index(std::span<const ValidationScore> history, bool loss_breaks_ties);
bool should_stop(std::span<const ValidationScore> history, int patience, bool loss_breaks_ties);

/// Stage 1: K-way cross-entropy on the known classes, early-stopped on
/// validation K-way accuracy; the best epoch's parameters are restored.
TrainReport pretrain(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg);

/// Stage 2: soft-label KL plus the open-class loss on mixup pseudo samples,
/// L = mu * L_S + (1 - mu) * L_M, early-stopped on (K+1)-way validation accuracy.
TrainReport train_open(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg);

namespace detail {

enum class Objective {
  kKnownCrossEntropy,  // pretraining
  kOpenCrossEntropy,   // (K+1)-way cross-entropy, no mixup
  kSoftLabelMixup,     // open training
};

TrainReport run_stage(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg,
                      Objective objective);

}  // namespace detail

}  // namespace slmm
