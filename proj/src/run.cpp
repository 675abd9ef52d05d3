#include "slmm/run.hpp"

#include <fstream>
#include <random>

#include "slmm/error.hpp"
#include "slmm/rng.hpp"

namespace slmm {

namespace fs = std::filesystem;

namespace {

nlohmann::json architecture_json(const EncoderConfig& e) {
  return nlohmann::json{{"num_layers", e.num_layers}, {"hidden", e.hidden},
                        {"intent_dim", e.intent_dim}, {"num_heads", e.num_heads},
                        {"ffn_dim", e.ffn_dim},       {"max_len", e.max_len},
                        {"init_std", e.init_std}};
}

template <typename T>
void take(const nlohmann::json& doc, const char* key, T& field) {
  if (doc.contains(key)) field = doc.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  if (!(known_ratio > 0.0 && known_ratio <= 1.0)) throw ConfigError("known_ratio must lie in (0, 1]");
  if (vocab_min_count < 1) throw ConfigError("vocab_min_count must be >= 1");
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be >= 0");
  train.validate();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json train_json = train.to_json();
  train_json.erase("seed");
  return nlohmann::json{{"data", data},
                        {"format", std::string(format_name(format))},
                        {"known_ratio", known_ratio},
                        {"seed", seed},
                        {"vocab_min_count", vocab_min_count},
                        {"encoder", architecture_json(encoder)},
                        {"train_all_layers", train_all_layers},
                        {"train", train_json},
                        {"disable_pretrain", disable_pretrain},
                        {"threshold", threshold},
                        {"out", out}};
}

void RunConfig::merge_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  take(doc, "data", data);
  if (doc.contains("format")) format = parse_format(doc.at("format").get<std::string>());
  take(doc, "known_ratio", known_ratio);
  take(doc, "seed", seed);
  take(doc, "vocab_min_count", vocab_min_count);
  if (doc.contains("encoder")) {
    const auto& e = doc.at("encoder");
    take(e, "num_layers", encoder.num_layers);
    take(e, "hidden", encoder.hidden);
    take(e, "intent_dim", encoder.intent_dim);
    take(e, "num_heads", encoder.num_heads);
    take(e, "ffn_dim", encoder.ffn_dim);
    take(e, "max_len", encoder.max_len);
    take(e, "init_std", encoder.init_std);
  }
  take(doc, "train_all_layers", train_all_layers);
  if (doc.contains("train")) train.merge_json(doc.at("train"));
  take(doc, "disable_pretrain", disable_pretrain);
  take(doc, "threshold", threshold);
  take(doc, "out", out);
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  RunConfig cfg;
  cfg.merge_json(doc);
  return cfg;
}

DatasetBundle load_dataset(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no data path given");
  const fs::path root(cfg.data);
  if (fs::is_directory(root)) {
    const std::string ext = cfg.format == CorpusFormat::kTsv ? ".tsv" : ".jsonl";
    std::vector<fs::path> files;
    for (const char* part : {"train", "dev", "test"}) {
      fs::path p = root / (std::string(part) + ext);
      if (!fs::exists(p)) throw DataError("partitioned data directory lacks " + p.string());
      files.push_back(std::move(p));
    }
    auto corpora = load_corpora(files, cfg.format);
    PartitionedCorpus parts{std::move(corpora[0]), std::move(corpora[1]), std::move(corpora[2])};
    return make_split(parts, cfg.known_ratio, cfg.seed, cfg.vocab_min_count);
  }
  if (!fs::exists(root)) throw DataError("no such data file: " + root.string());
  return make_split(load_corpus(root, cfg.format), cfg.known_ratio, cfg.seed, cfg.vocab_min_count);
}

Encoder build_encoder(const RunConfig& cfg, const DatasetBundle& bundle) {
  EncoderConfig e = cfg.encoder;
  e.vocab_size = bundle.vocab.size();
  e.num_known = bundle.num_known();
  e.seed = derive_seed(cfg.seed, "encoder");
  e.trainable = cfg.train_all_layers ? Trainability::all(e.num_layers)
                                     : Trainability::last_layer(e.num_layers);
  return Encoder(e);
}

TrainConfig stage_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.seed;
  return t;
}

Encoder run_pretrain(const RunConfig& cfg, const DatasetBundle& bundle,
                     std::optional<TrainReport>* report) {
  cfg.validate();
  Encoder model = build_encoder(cfg, bundle);
  if (cfg.disable_pretrain) {
    if (report) report->reset();
    return model;
  }
  TrainReport r = pretrain(model, bundle, stage_config(cfg));
  if (report) *report = std::move(r);
  return model;
}

Encoder run_open(const RunConfig& cfg, const DatasetBundle& bundle, Encoder start,
                 TrainReport* report) {
  cfg.validate();
  TrainReport r = train_open(start, bundle, stage_config(cfg));
  if (report) *report = std::move(r);
  return start;
}

ExperimentResult run_experiment(const RunConfig& cfg, const DatasetBundle& bundle) {
  std::optional<TrainReport> pre_report;
  Encoder pretrained = run_pretrain(cfg, bundle, &pre_report);
  std::optional<MetricsReport> msp;
  if (!cfg.disable_pretrain) {
    msp = evaluate(pretrained, bundle.test, bundle.vocab, Predictor{Decision::kMsp, cfg.threshold});
  }
  TrainReport open_report;
  Encoder model = run_open(cfg, bundle, pretrained, &open_report);
  MetricsReport slmm = evaluate(model, bundle.test, bundle.vocab, Predictor{});
  std::optional<Encoder> kept;
  if (!cfg.disable_pretrain) kept.emplace(std::move(pretrained));
  return ExperimentResult{std::move(pre_report), std::move(open_report), std::move(slmm),
                          std::move(msp),        std::move(kept),        std::move(model)};
}

void set_sweep_param(TrainConfig& cfg, const std::string& param, double value) {
  if (param == "xi") {
    cfg.xi = value;
  } else if (param == "mu") {
    cfg.mu = value;
  } else if (param == "alpha") {
    cfg.alpha = value;
  } else if (param == "n_mix" || param == "n") {
    if (value != static_cast<double>(static_cast<int>(value))) {
      throw ConfigError("n_mix sweep values must be integers");
    }
    cfg.n_mix = static_cast<int>(value);
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "' (expected xi, mu, alpha or n_mix)");
  }
}

std::vector<SweepRow> run_sweep(const RunConfig& cfg, const DatasetBundle& bundle,
                                const Encoder& pretrained, const std::string& param,
                                const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<SweepRow> rows;
  for (double value : values) {
    RunConfig point = cfg;
    set_sweep_param(point.train, param, value);
    SweepRow row;
    row.param = param;
    row.value = value;
    Encoder model = run_open(point, bundle, pretrained, &row.report);
    row.metrics = evaluate(model, bundle.test, bundle.vocab, Predictor{});
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json sweep_to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& row : rows) {
    doc.push_back({{"param", row.param},
                   {"value", row.value},
                   {"accuracy", row.metrics.accuracy},
                   {"macro_f1_all", row.metrics.macro_f1_all},
                   {"macro_f1_known", row.metrics.macro_f1_known},
                   {"f1_open", row.metrics.f1_open},
                   {"weighted_f1", row.metrics.weighted_f1},
                   {"best_epoch", row.report.best_epoch},
                   {"stop_epoch", row.report.stop_epoch}});
  }
  return doc;
}

std::string dump_json(const nlohmann::json& doc) { return doc.dump(2) + "\n"; }

// --- staged output ------------------------------------------------------------

StagedOutput::StagedOutput(fs::path dir) : dir_(std::move(dir)) {
  if (dir_.empty()) throw ConfigError("no output directory given");
  const fs::path parent = fs::absolute(dir_).parent_path();
  fs::create_directories(parent);
  std::random_device entropy;
  for (int attempt = 0; attempt < 16; ++attempt) {
    fs::path candidate = parent / ("." + dir_.filename().string() + ".tmp" + std::to_string(entropy()));
    if (fs::create_directory(candidate)) {
      staging_ = std::move(candidate);
      return;
    }
  }
  throw Error("cannot create a staging directory next to " + dir_.string());
}

StagedOutput::~StagedOutput() {
  std::error_code ec;
  if (!staging_.empty()) fs::remove_all(staging_, ec);
}

void StagedOutput::write_text(const std::string& name, const std::string& text) const {
  std::ofstream out(path(name), std::ios::binary);
  out << text;
  if (!out) throw Error("failed writing " + path(name).string());
}

void StagedOutput::write_json(const std::string& name, const nlohmann::json& doc) const {
  write_text(name, dump_json(doc));
}

void StagedOutput::commit() {
  if (committed_) return;
  fs::create_directories(dir_);
  for (const auto& entry : fs::directory_iterator(staging_)) {
    fs::rename(entry.path(), dir_ / entry.path().filename());
  }
  committed_ = true;
}

}  // namespace slmm
