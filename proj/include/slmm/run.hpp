#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "slmm/data.hpp"
#include "slmm/encoder.hpp"
#include "slmm/eval.hpp"
#include "slmm/trainer.hpp"

namespace slmm {

/// Everything one pipeline invocation needs. Serialises to the
/// resolved_config.json written next to every output.
struct RunConfig {
  std::string data;  // corpus file, or a directory holding train/dev/test files
  CorpusFormat format = CorpusFormat::kTsv;
  double known_ratio = 0.5;
  std::uint64_t seed = 0;
  int vocab_min_count = 1;
  EncoderConfig encoder;  // vocab_size, num_known and seed are filled per run
  bool train_all_layers = false;
  TrainConfig train;      // shared by both stages; train.seed follows seed
  bool disable_pretrain = false;
  double threshold = 0.5;  // MSP baseline
  std::string out;

  void validate() const;
  nlohmann::json to_json() const;
  /// Overwrites the fields present in `doc` (nested "encoder" and "train").
  void merge_json(const nlohmann::json& doc);
  static RunConfig from_json(const nlohmann::json& doc);
};

/// Loads `cfg.data` and applies the known-class split. A directory is read
/// as an already partitioned benchmark (train, dev, test in the same format).
DatasetBundle load_dataset(const RunConfig& cfg);

/// Fresh encoder sized for the bundle, seeded from cfg.seed.
Encoder build_encoder(const RunConfig& cfg, const DatasetBundle& bundle);

/// TrainConfig actually used by the stages (seed propagated).
TrainConfig stage_config(const RunConfig& cfg);

struct ExperimentResult {
  std::optional<TrainReport> pretrain_report;  // absent when pretraining is disabled
  TrainReport open_report;
  MetricsReport slmm;
  std::optional<MetricsReport> msp;  // absent when pretraining is disabled
  std::optional<Encoder> pretrained;
  Encoder model;
};

/// Stage 1 only (or the untouched initial model when disabled).
Encoder run_pretrain(const RunConfig& cfg, const DatasetBundle& bundle,
                     std::optional<TrainReport>* report);

/// Stage 2 from a given starting model.
Encoder run_open(const RunConfig& cfg, const DatasetBundle& bundle, Encoder start,
                 TrainReport* report);

/// Pretrain, MSP baseline on the pretrained model, open training, evaluation.
ExperimentResult run_experiment(const RunConfig& cfg, const DatasetBundle& bundle);

struct SweepRow {
  std::string param;
  double value = 0.0;
  MetricsReport metrics;
  TrainReport report;
};

/// Names accepted by sweeps: xi, mu, alpha, n_mix.
void set_sweep_param(TrainConfig& cfg, const std::string& param, double value);

/// One stage-2 run per value, all starting from the same stage-1 model
/// (the swept parameters do not affect pretraining).
std::vector<SweepRow> run_sweep(const RunConfig& cfg, const DatasetBundle& bundle,
                                const Encoder& pretrained, const std::string& param,
                                const std::vector<double>& values);

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows);

/// Output files are written into a sibling temporary directory and moved into
/// `dir` only by commit(); an abandoned stage is deleted.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path dir);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  std::filesystem::path path(const std::string& name) const { return staging_ / name; }
  void write_json(const std::string& name, const nlohmann::json& doc) const;
  void write_text(const std::string& name, const std::string& text) const;
  /// Moves staged files into the final directory (overwriting same names).
  void commit();

 private:
  std::filesystem::path dir_;
  std::filesystem::path staging_;
  bool committed_ = false;
};

/// Stable JSON text: sorted keys (nlohmann default), 2-space indent, trailing newline.
std::string dump_json(const nlohmann::json& doc);

}  // namespace slmm
