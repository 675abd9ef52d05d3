#include "slmm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "slmm/error.hpp"
#include "slmm/mixup.hpp"
#include "slmm/optimizer.hpp"
#include "slmm/rng.hpp"
#include "slmm/softlabel.hpp"

namespace slmm {

// --- configuration ----------------------------------------------------------

void TrainConfig::validate() const {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in [0, 1]");
  if (!(xi >= 0.0 && xi < 1.0)) throw ConfigError("xi must lie in [0, 1)");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in [0, 1)");
  }
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"xi", xi},
                        {"mu", mu},
                        {"alpha", alpha},
                        {"n_mix", n_mix},
                        {"lr", lr},
                        {"batch_size", batch_size},
                        {"max_epochs", max_epochs},
                        {"patience", patience},
                        {"warmup_fraction", warmup_fraction},
                        {"weight_decay", weight_decay},
                        {"clip_norm", clip_norm},
                        {"seed", seed},
                        {"disable_sl", disable_sl},
                        {"disable_mm", disable_mm}};
}

void TrainConfig::merge_json(const nlohmann::json& doc) {
  auto take = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
  };
  take("xi", xi);
  take("mu", mu);
  take("alpha", alpha);
  take("n_mix", n_mix);
  take("lr", lr);
  take("batch_size", batch_size);
  take("max_epochs", max_epochs);
  take("patience", patience);
  take("warmup_fraction", warmup_fraction);
  take("weight_decay", weight_decay);
  take("clip_norm", clip_norm);
  take("seed", seed);
  take("disable_sl", disable_sl);
  take("disable_mm", disable_mm);
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"loss_main", e.loss_main},
                           {"loss_mix", e.loss_mix},
                           {"loss_total", e.loss_total},
                           {"val_metric", e.val_metric},
                           {"val_loss", e.val_loss}});
  }
  return nlohmann::json{{"stage", stage},
                        {"best_epoch", best_epoch},
                        {"stop_epoch", stop_epoch},
                        {"steps", steps.size()},
                        {"wall_seconds", wall_seconds},
                        {"epochs", epochs_json}};
}

// --- schedule and stopping ----------------------------------------------------

double lr_at(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0 || step >= total_steps) return 0.0;
  step = std::max(step, 0L);
  const auto warmup = static_cast<long>(
      std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps) - 1e-9));
  if (step < warmup) return cfg.lr * static_cast<double>(step) / static_cast<double>(warmup);
  return cfg.lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

bool should_stop(std::span<const double> history, int patience) {
  if (history.empty()) return false;
  const auto best = static_cast<std::size_t>(
      std::distance(history.begin(), std::max_element(history.begin(), history.end())));
  return static_cast<long>(history.size() - 1 - best) >= patience;
}

bool improves(const ValidationScore& candidate, const ValidationScore& incumbent,
              bool loss_breaks_ties) {
  if (candidate.metric != incumbent.metric) return candidate.metric > incumbent.metric;
  return loss_breaks_ties && candidate.loss < incumbent.loss;
}

std::size_t best_index(std::span<const ValidationScore> history, bool loss_breaks_ties) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (improves(history[i], history[best], loss_breaks_ties)) best = i;
  }
  return best;
}

bool should_stop(std::span<const ValidationScore> history, int patience, bool loss_breaks_ties) {
  if (history.empty()) return false;
  return static_cast<long>(history.size() - 1 - best_index(history, loss_breaks_ties)) >= patience;
}

// --- stage runner -------------------------------------------------------------

namespace detail {

namespace {

struct SampleGraph {
  std::vector<int> ids;
  StackTrace stack;
  HeadTrace head;
  RowVector z;
};

struct MixGraph {
  StackTrace stack;
  HeadTrace head;
  RowVector z;
};

std::size_t longest(const EncodedCorpus& data, const Batch& batch) {
  std::size_t len = 0;
  for (auto i : batch) len = std::max(len, data.ids[i].size());
  return len;
}

class StageRunner {
 public:
  StageRunner(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg, Objective objective)
      : model_(model),
        cfg_(cfg),
        objective_(objective),
        num_known_(bundle.num_known()),
        width_(objective == Objective::kKnownCrossEntropy ? num_known_ : num_known_ + 1),
        mix_layer_(MixupConfig{cfg.alpha, cfg.n_mix}.layer(model.num_layers())),
        train_(encode_corpus(bundle.train, bundle.vocab)),
        validation_(encode_corpus(bundle.validation, bundle.vocab)) {
    switch (objective) {
      case Objective::kKnownCrossEntropy: stage_ = "pretrain"; break;
      case Objective::kOpenCrossEntropy: stage_ = "open-ce"; break;
      case Objective::kSoftLabelMixup: stage_ = "open"; break;
    }
    mixing_ = objective == Objective::kSoftLabelMixup && !cfg.disable_mm;
    // known-only validation cannot see the open region; only the mixup term
    // of the combined loss can, so it decides accuracy ties in open training
    loss_ties_ = mixing_;
    // open-ce shares the open stage's streams so the two can be compared step by step
    stream_ = objective == Objective::kKnownCrossEntropy ? "pretrain" : "open";
    mix_rng_ = make_rng(cfg.seed, stream_ + ".mixup");

    const auto& tr = model.config().trainable;
    stop_layer_ = tr.embeddings ? 0 : model.num_layers();
    for (int l : tr.layers) stop_layer_ = std::min(stop_layer_, l - 1);
  }

  TrainReport run() {
    const auto started = std::chrono::steady_clock::now();
    if (train_.size() == 0) throw ConfigError("training split is empty");
    if (validation_.size() == 0) throw ConfigError("validation split is empty");
    if (mixing_) MixupConfig{cfg_.alpha, cfg_.n_mix}.validate(model_.num_layers());

    AdamW optimizer(model_, AdamWConfig{0.9, 0.999, 1e-8, cfg_.weight_decay, cfg_.clip_norm});
    const auto batch_seed = derive_seed(cfg_.seed, stream_ + ".batches");
    const long per_epoch = static_cast<long>(
        (train_.size() + static_cast<std::size_t>(cfg_.batch_size) - 1) / static_cast<std::size_t>(cfg_.batch_size));
    const long total_steps = per_epoch * cfg_.max_epochs;

    TrainReport report;
    report.stage = stage_;
    std::vector<ValidationScore> history;
    std::vector<Matrix> best_values = snapshot();
    long step = 0;
    for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
      EpochRecord record;
      record.epoch = epoch + 1;
      const auto batches = make_batches(train_.size(), cfg_.batch_size, true, batch_seed, epoch);
      for (std::size_t b = 0; b < batches.size(); ++b) {
        const StepRecord s = train_step(batches[b], lr_at(step, total_steps, cfg_), optimizer, step, b);
        record.loss_main += s.loss_main / static_cast<double>(batches.size());
        record.loss_mix += s.loss_mix / static_cast<double>(batches.size());
        record.loss_total += s.loss_total / static_cast<double>(batches.size());
        report.steps.push_back(s);
        ++step;
      }
      const ValidationScore score = validate();
      record.val_metric = score.metric;
      record.val_loss = score.loss;
      history.push_back(score);
      report.epochs.push_back(record);
      if (best_index(history, loss_ties_) == history.size() - 1) best_values = snapshot();
      if (cfg_.verbose) {
        std::fprintf(stderr, "[%s] epoch %d loss %.5f (main %.5f mix %.5f) val_acc %.4f val_loss %.5f\n",
                     stage_.c_str(), record.epoch, record.loss_total, record.loss_main, record.loss_mix,
                     score.metric, score.loss);
      }
      if (should_stop(history, cfg_.patience, loss_ties_)) break;
    }
    restore(best_values);
    report.best_epoch = static_cast<int>(best_index(history, loss_ties_)) + 1;
    report.stop_epoch = static_cast<int>(history.size());
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
  }

 private:
  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> values;
    for (const Parameter* p : std::as_const(model_).parameters()) values.push_back(p->value);
    return values;
  }

  void restore(const std::vector<Matrix>& values) {
    auto params = model_.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
  }

  LossWithGrad main_loss(std::span<const int> labels, const Matrix& logits) const {
    if (objective_ == Objective::kSoftLabelMixup) {
      std::vector<SoftLabelDistribution> targets;
      targets.reserve(labels.size());
      for (int y : labels) targets.push_back(soften(y, num_known_, cfg_.effective_xi()));
      return kl_loss(targets, logits);
    }
    std::vector<int> targets(labels.begin(), labels.end());
    for (auto& t : targets) t -= 1;
    return cross_entropy(targets, logits);
  }

  StepRecord train_step(const Batch& batch, double lr, AdamW& optimizer, long step, std::size_t index) {
    const int T = model_.num_layers();
    const std::size_t len = longest(train_, batch);
    const auto B = static_cast<Eigen::Index>(batch.size());

    std::vector<SampleGraph> graphs(batch.size());
    std::vector<int> labels(batch.size());
    Matrix logits(B, width_);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto [ids, mask] = model_.prepare_ids(train_.ids[batch[b]], len);
      SampleGraph& g = graphs[b];
      g.stack = model_.trace_layers(model_.embed_ids(ids), mask, 0, T);
      g.z = model_.head_forward(g.stack.output, mask, &g.head);
      g.ids = std::move(ids);
      logits.row(static_cast<Eigen::Index>(b)) = model_.classify(g.z, width_);
      labels[b] = train_.labels[batch[b]];
    }
    const LossWithGrad main = main_loss(labels, logits);

    MixupBatch mix;
    std::vector<MixGraph> mixed;
    LossWithGrad mix_loss;
    if (mixing_) {
      mix = pair_by_shuffle(labels, mix_rng_);
      draw_lambdas(mix, cfg_.alpha, mix_rng_);
      Matrix mix_logits(static_cast<Eigen::Index>(mix.size()), width_);
      mixed.resize(mix.size());
      for (std::size_t m = 0; m < mix.size(); ++m) {
        const SampleGraph& a = graphs[mix.pairs[m].first];
        const SampleGraph& b = graphs[mix.pairs[m].second];
        auto [state, mask] = interpolate_states(a.stack.output_of(mix_layer_), a.stack.mask,
                                                b.stack.output_of(mix_layer_), b.stack.mask, mix.lambdas[m]);
        MixGraph& g = mixed[m];
        g.stack = model_.trace_layers(state, mask, mix_layer_, T);
        g.z = model_.head_forward(g.stack.output, mask, &g.head);
        mix_logits.row(static_cast<Eigen::Index>(m)) = model_.classify(g.z, width_);
      }
      if (!mixed.empty()) mix_loss = mixup_loss(mix_logits);
    }

    // L = mu * L_S + (1 - mu) * L_M; a batch without pairs keeps the mu weight
    const double main_weight = mixing_ ? cfg_.mu : 1.0;
    const double mix_weight = 1.0 - cfg_.mu;
    StepRecord record;
    record.loss_main = main.value;
    record.mixup_pairs = static_cast<int>(mixed.size());
    record.loss_mix = mixed.empty() ? 0.0 : mix_loss.value;
    record.loss_total = main_weight * main.value + (mixed.empty() ? 0.0 : mix_weight * mix_loss.value);
    if (!std::isfinite(record.loss_total)) {
      std::ostringstream msg;
      msg << stage_ << ": non-finite loss " << record.loss_total << " at step " << step << " (batch "
          << index << ")";
      throw TrainingError(msg.str());
    }

    model_.zero_grad();
    std::vector<Matrix> inject(batch.size());
    for (std::size_t m = 0; m < mixed.size(); ++m) {
      MixGraph& g = mixed[m];
      const RowVector d_logits = mix_weight * mix_loss.grad.row(static_cast<Eigen::Index>(m));
      const RowVector d_z = model_.classifier_backward(g.z, d_logits);
      const Matrix d_state =
          model_.backprop_layers(g.stack, model_.head_backward(g.head, d_z), -1, nullptr, stop_layer_);
      if (stop_layer_ >= mix_layer_) continue;
      const double lambda = mix.lambdas[m];
      for (auto [who, weight] : {std::pair{mix.pairs[m].first, lambda},
                                 std::pair{mix.pairs[m].second, 1.0 - lambda}}) {
        if (inject[who].size() == 0) inject[who] = Matrix::Zero(d_state.rows(), d_state.cols());
        inject[who] += weight * d_state;
      }
    }
    for (std::size_t b = 0; b < graphs.size(); ++b) {
      SampleGraph& g = graphs[b];
      const RowVector d_logits = main_weight * main.grad.row(static_cast<Eigen::Index>(b));
      const RowVector d_z = model_.classifier_backward(g.z, d_logits);
      const Matrix d_top = model_.head_backward(g.head, d_z);
      if (stop_layer_ >= T) continue;
      const Matrix* extra = inject[b].size() == 0 ? nullptr : &inject[b];
      const Matrix d_input = model_.backprop_layers(g.stack, d_top, mix_layer_, extra, stop_layer_);
      if (stop_layer_ == 0) model_.embedding_backward(g.ids, d_input);
    }
    optimizer.clip_gradients();
    optimizer.step(lr);
    return record;
  }

  ValidationScore validate() {
    const int T = model_.num_layers();
    auto rng = make_rng(cfg_.seed, stream_ + ".validation");
    double correct = 0.0;
    double main_sum = 0.0;
    double mix_sum = 0.0;
    std::size_t mix_count = 0;
    const auto batches = make_batches(validation_.size(), cfg_.batch_size, false, 0, 0);
    for (const auto& batch : batches) {
      std::vector<std::vector<int>> seqs;
      std::vector<int> labels;
      for (auto i : batch) {
        seqs.push_back(validation_.ids[i]);
        labels.push_back(validation_.labels[i]);
      }
      const HiddenStates at_mix = model_.forward_layers(model_.embed_batch(seqs), 0, mix_layer_);
      const HiddenStates top = model_.forward_layers(at_mix, mix_layer_, T);
      Matrix logits(static_cast<Eigen::Index>(batch.size()), width_);
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const RowVector z = model_.intent_head(mean_pool(top.values[b], top.masks[b]));
        const RowVector row = model_.classify(z, width_);
        logits.row(static_cast<Eigen::Index>(b)) = row;
        if (argmax(row) + 1 == labels[b]) correct += 1.0;
      }
      main_sum += main_loss(labels, logits).value * static_cast<double>(batch.size());
      if (mixing_) {
        MixupBatch mix = pair_by_shuffle(labels, rng);
        draw_lambdas(mix, cfg_.alpha, rng);
        if (mix.size() == 0) continue;
        Matrix mix_logits(static_cast<Eigen::Index>(mix.size()), width_);
        for (std::size_t m = 0; m < mix.size(); ++m) {
          const auto [i, j] = mix.pairs[m];
          auto [state, mask] = interpolate_states(at_mix.values[i], at_mix.masks[i], at_mix.values[j],
                                                  at_mix.masks[j], mix.lambdas[m]);
          HiddenStates h{{std::move(state)}, {std::move(mask)}};
          const HiddenStates out = model_.forward_layers(h, mix_layer_, T);
          const RowVector z = model_.intent_head(mean_pool(out.values[0], out.masks[0]));
          mix_logits.row(static_cast<Eigen::Index>(m)) = model_.classify(z, width_);
        }
        mix_sum += mixup_loss(mix_logits).value * static_cast<double>(mix.size());
        mix_count += mix.size();
      }
    }
    const auto n = static_cast<double>(validation_.size());
    ValidationScore score;
    score.metric = correct / n;
    const double main_mean = main_sum / n;
    if (mixing_ && mix_count > 0) {
      score.loss = cfg_.mu * main_mean + (1.0 - cfg_.mu) * mix_sum / static_cast<double>(mix_count);
    } else {
      score.loss = main_mean;
    }
    return score;
  }

  Encoder& model_;
  const TrainConfig& cfg_;
  Objective objective_;
  int num_known_;
  int width_;
  int mix_layer_;
  int stop_layer_ = 0;
  bool mixing_ = false;
  bool loss_ties_ = false;
  std::string stage_;
  std::string stream_;
  EncodedCorpus train_;
  EncodedCorpus validation_;
  Rng mix_rng_;
};

}  // namespace

TrainReport run_stage(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg,
                      Objective objective) {
  cfg.validate();
  if (bundle.num_known() != model.num_known()) {
    throw ConfigError("model and split disagree on the number of known classes");
  }
  if (objective == Objective::kKnownCrossEntropy && bundle.num_known() < 2) {
    throw ConfigError("pretraining needs at least 2 known classes");
  }
  if (objective == Objective::kSoftLabelMixup) {
    if (cfg.batch_size < 2 && !cfg.disable_mm) {
      throw ConfigError("open training with mixup needs batch_size >= 2");
    }
    if (soft_label_mass_warning(cfg.effective_xi())) {
      std::fprintf(stderr,
                   "warning: xi = %.3g gives the open class at least as much mass as the gold class\n",
                   cfg.effective_xi());
    }
  }
  return StageRunner(model, bundle, cfg, objective).run();
}

}  // namespace detail

TrainReport pretrain(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg) {
  return detail::run_stage(model, bundle, cfg, detail::Objective::kKnownCrossEntropy);
}

TrainReport train_open(Encoder& model, const DatasetBundle& bundle, const TrainConfig& cfg) {
  return detail::run_stage(model, bundle, cfg, detail::Objective::kSoftLabelMixup);
}

}  // namespace slmm
