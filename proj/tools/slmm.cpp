// slmm: command-line driver for the open intent pipeline.
//
//   slmm synth    --out DIR                      synthetic corpus
//   slmm split    --data F --out DIR             split files, splitspec.json, vocab.json
//   slmm pretrain --data F --out DIR             stage 1 checkpoint
//   slmm train    --data F --out DIR [--init C]  stage 2 (runs stage 1 first without --init)
//   slmm eval     --checkpoint C --out DIR       metrics, confusion, embeddings
//   slmm baseline --data F --out DIR [--checkpoint C]
//   slmm sweep    --data F --param xi --out DIR
//   slmm run      --data F --out DIR             everything above for one seed
//
// Settings resolve as: built-in defaults, the run config stored in a loaded
// checkpoint, --config JSON, then explicit flags.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include "slmm/error.hpp"
#include "slmm/run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slmm;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> values;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad sweep value '" + item + "'");
    }
  }
  return values;
}

std::vector<double> default_grid(const std::string& param, int num_layers) {
  if (param == "xi") return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  if (param == "mu") return {0.1, 0.3, 0.5, 0.7, 0.9};
  if (param == "alpha") return {0.5, 1.0, 2.0, 4.0};
  std::vector<double> layers;
  for (int n = 1; n < num_layers; ++n) layers.push_back(n);
  return layers;
}

// Flags shared by the pipeline commands. Each bound flag writes into its own
// holder and is applied on top of the JSON layers only when given.
class Settings {
 public:
  explicit Settings(CLI::App* cmd) : cmd_(cmd) {
    cmd->add_option("--config", config_path_, "JSON config (flags override it)");
    cmd->add_flag("--verbose,-v", verbose_, "per-epoch progress on stderr");
  }

  void data_flags() {
    bind<std::string>("--data", "corpus file, or directory with train/dev/test files",
                      [](RunConfig& c, const std::string& v) { c.data = v; });
    bind<std::string>("--format", "tsv or jsonl",
                      [](RunConfig& c, const std::string& v) { c.format = parse_format(v); });
    bind<double>("--known-ratio", "fraction of intents treated as known",
                 [](RunConfig& c, double v) { c.known_ratio = v; });
    bind<int>("--vocab-min-count", "minimum training count of a vocabulary token",
              [](RunConfig& c, int v) { c.vocab_min_count = v; });
  }

  void model_flags() {
    bind<int>("--layers", "transformer layers T", [](RunConfig& c, int v) { c.encoder.num_layers = v; });
    bind<int>("--hidden", "hidden width H", [](RunConfig& c, int v) { c.encoder.hidden = v; });
    bind<int>("--intent-dim", "intent representation width D",
              [](RunConfig& c, int v) { c.encoder.intent_dim = v; });
    bind<int>("--heads", "attention heads", [](RunConfig& c, int v) { c.encoder.num_heads = v; });
    bind<int>("--ffn-dim", "feed-forward width", [](RunConfig& c, int v) { c.encoder.ffn_dim = v; });
    bind<int>("--max-len", "maximum tokens per utterance",
              [](RunConfig& c, int v) { c.encoder.max_len = v; });
    bind<double>("--init-std", "weight init standard deviation",
                 [](RunConfig& c, double v) { c.encoder.init_std = v; });
    flag("--train-all-layers", "update every layer and the embeddings, not only the last layer",
         [](RunConfig& c) { c.train_all_layers = true; });
  }

  void train_flags() {
    bind<double>("--xi", "open-class mass of the soft labels", [](RunConfig& c, double v) { c.train.xi = v; });
    bind<double>("--mu", "weight of the soft-label loss", [](RunConfig& c, double v) { c.train.mu = v; });
    bind<double>("--alpha", "Beta(alpha, alpha) mixing parameter",
                 [](RunConfig& c, double v) { c.train.alpha = v; });
    bind<int>("--n-mix", "interpolation layer (default T-1)", [](RunConfig& c, int v) { c.train.n_mix = v; });
    bind<double>("--lr", "peak learning rate", [](RunConfig& c, double v) { c.train.lr = v; });
    bind<int>("--batch-size", "batch size", [](RunConfig& c, int v) { c.train.batch_size = v; });
    bind<int>("--max-epochs", "epochs per stage", [](RunConfig& c, int v) { c.train.max_epochs = v; });
    bind<int>("--patience", "early stopping patience", [](RunConfig& c, int v) { c.train.patience = v; });
    bind<double>("--warmup", "warmup fraction of the steps",
                 [](RunConfig& c, double v) { c.train.warmup_fraction = v; });
    bind<double>("--weight-decay", "decoupled weight decay",
                 [](RunConfig& c, double v) { c.train.weight_decay = v; });
    bind<double>("--clip-norm", "global gradient norm cap (<= 0 disables)",
                 [](RunConfig& c, double v) { c.train.clip_norm = v; });
    flag("--disable-sl", "ablation: xi = 0", [](RunConfig& c) { c.train.disable_sl = true; });
    flag("--disable-mm", "ablation: no mixup loss", [](RunConfig& c) { c.train.disable_mm = true; });
    flag("--disable-pretrain", "ablation: skip stage 1", [](RunConfig& c) { c.disable_pretrain = true; });
  }

  void threshold_flag() {
    bind<double>("--threshold", "MSP rejection threshold", [](RunConfig& c, double v) { c.threshold = v; });
  }

  void common_flags() {
    bind<std::uint64_t>("--seed", "run seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
    bind<std::string>("--out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  }

  /// Extra string-valued command setting stored next to the run config.
  void extra(const std::string& name, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<std::string>();
    CLI::Option* opt = cmd_->add_option(name, *holder, help);
    extras_.push_back({opt, key, holder});
  }

  const json& file_config() {
    if (!file_loaded_) {
      if (!config_path_.empty()) file_ = read_json_file(config_path_);
      if (!file_.is_null() && !file_.is_object()) throw ConfigError("config must be a JSON object");
      file_loaded_ = true;
    }
    return file_;
  }

  /// Command setting from flag, then config file, then `fallback`.
  std::string extra_value(const std::string& key, const std::string& fallback = "") {
    for (const auto& e : extras_) {
      if (e.key == key && e.option->count() > 0) return *e.value;
    }
    const json& f = file_config();
    if (f.is_object() && f.contains(key) && f.at(key).is_string()) return f.at(key).get<std::string>();
    return fallback;
  }

  RunConfig resolve(const json* stored = nullptr) {
    RunConfig cfg;
    if (stored != nullptr) cfg.merge_json(*stored);
    const json& f = file_config();
    if (f.is_object()) cfg.merge_json(f);
    for (const auto& b : bound_) {
      if (b.first->count() > 0) b.second(cfg);
    }
    cfg.train.verbose = verbose_;
    return cfg;
  }

 private:
  template <typename T, typename Set>
  void bind(const std::string& name, const std::string& help, Set set) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = cmd_->add_option(name, *holder, help);
    bound_.push_back({opt, [holder, set](RunConfig& c) { set(c, *holder); }});
  }

  template <typename Set>
  void flag(const std::string& name, const std::string& help, Set set) {
    auto holder = std::make_shared<bool>(false);
    CLI::Option* opt = cmd_->add_flag(name, *holder, help);
    bound_.push_back({opt, [set](RunConfig& c) { set(c); }});
  }

  struct Extra {
    CLI::Option* option;
    std::string key;
    std::shared_ptr<std::string> value;
  };

  CLI::App* cmd_;
  std::string config_path_;
  bool verbose_ = false;
  bool file_loaded_ = false;
  json file_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> bound_;
  std::vector<Extra> extras_;
};

json checkpoint_extra(const RunConfig& cfg, const DatasetBundle& bundle, const std::string& stage) {
  return json{{"stage", stage},
              {"run", cfg.to_json()},
              {"vocab", bundle.vocab.to_json()},
              {"splitspec", bundle.spec.to_json()}};
}

void require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("--out is required");
}

std::string corpus_file(const std::string& stem, CorpusFormat format) {
  return stem + "." + std::string(format_name(format));
}

// Checkpoint loaded together with the data it was trained on.
struct Loaded {
  RunConfig cfg;
  DatasetBundle bundle;
  Encoder model;
  std::string stage;
};

Loaded load_with_data(Settings& s, const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  const json stored = ckpt.extra.value("run", json::object());
  RunConfig cfg = s.resolve(&stored);
  cfg.validate();
  DatasetBundle bundle = load_dataset(cfg);
  if (ckpt.extra.contains("vocab") && !(Vocabulary::from_json(ckpt.extra.at("vocab")) == bundle.vocab)) {
    throw DataError("checkpoint " + path + " was trained with a different vocabulary than --data gives");
  }
  if (ckpt.model.num_known() != bundle.num_known()) {
    throw DataError("checkpoint " + path + " has K = " + std::to_string(ckpt.model.num_known()) +
                    " but the split gives K = " + std::to_string(bundle.num_known()));
  }
  // the architecture is the checkpoint's, whatever the flags say
  const auto& arch = ckpt.model.config();
  cfg.encoder.num_layers = arch.num_layers;
  cfg.encoder.hidden = arch.hidden;
  cfg.encoder.intent_dim = arch.intent_dim;
  cfg.encoder.num_heads = arch.num_heads;
  cfg.encoder.ffn_dim = arch.ffn_dim;
  cfg.encoder.max_len = arch.max_len;
  cfg.encoder.init_std = arch.init_std;
  std::string stage = ckpt.extra.value("stage", "");
  return Loaded{std::move(cfg), std::move(bundle), std::move(ckpt.model), std::move(stage)};
}

void write_eval_outputs(StagedOutput& out, const Encoder& model, const DatasetBundle& bundle,
                        const MetricsReport& metrics, const std::string& prefix, bool embeddings) {
  out.write_json(prefix + "metrics.json", metrics.to_json());
  dump_confusion(metrics, bundle.test.intent_names, out.path(prefix + "confusion.csv"));
  if (embeddings) dump_embeddings(model, bundle.test, bundle.vocab, out.path("embeddings.tsv"));
}

void set_trainability(Encoder& model, const RunConfig& cfg) {
  const int T = model.num_layers();
  model.set_trainable(cfg.train_all_layers ? Trainability::all(T) : Trainability::last_layer(T));
}

// --- commands -------------------------------------------------------------------

struct SynthArgs {
  SyntheticConfig synth;
  std::string format = "tsv";
  std::string out;
  std::string config;
};

void cmd_synth(const SynthArgs& args, CLI::App* cmd) {
  SyntheticConfig s;
  std::string format = "tsv";
  std::string out;
  if (!args.config.empty()) {
    const json f = read_json_file(args.config);
    const json& j = f.contains("synth") ? f.at("synth") : f;
    s.num_classes = j.value("num_classes", s.num_classes);
    s.tokens_per_class = j.value("tokens_per_class", s.tokens_per_class);
    s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
    s.min_len = j.value("min_len", s.min_len);
    s.max_len = j.value("max_len", s.max_len);
    s.noise_rate = j.value("noise_rate", s.noise_rate);
    s.noise_pool_size = j.value("noise_pool_size", s.noise_pool_size);
    s.seed = f.value("seed", s.seed);
    format = f.value("format", format);
    out = f.value("out", out);
  }
  auto given = [&](const char* name) { return cmd->get_option(name)->count() > 0; };
  if (given("--classes")) s.num_classes = args.synth.num_classes;
  if (given("--tokens-per-class")) s.tokens_per_class = args.synth.tokens_per_class;
  if (given("--per-class")) s.samples_per_class = args.synth.samples_per_class;
  if (given("--min-len")) s.min_len = args.synth.min_len;
  if (given("--max-len")) s.max_len = args.synth.max_len;
  if (given("--noise")) s.noise_rate = args.synth.noise_rate;
  if (given("--noise-pool")) s.noise_pool_size = args.synth.noise_pool_size;
  if (given("--seed")) s.seed = args.synth.seed;
  if (given("--format")) format = args.format;
  if (given("--out")) out = args.out;
  if (out.empty()) throw ConfigError("--out is required");

  const CorpusFormat fmt = parse_format(format);
  const Corpus corpus = generate_synthetic(s);
  StagedOutput staged(out);
  write_corpus(corpus, staged.path(corpus_file("corpus", fmt)), fmt);
  staged.write_json("resolved_config.json",
                    json{{"command", "synth"},
                         {"seed", s.seed},
                         {"format", format},
                         {"out", out},
                         {"synth",
                          {{"num_classes", s.num_classes},
                           {"tokens_per_class", s.tokens_per_class},
                           {"samples_per_class", s.samples_per_class},
                           {"min_len", s.min_len},
                           {"max_len", s.max_len},
                           {"noise_rate", s.noise_rate},
                           {"noise_pool_size", s.noise_pool_size}}}});
  staged.commit();
}

json resolved(const RunConfig& cfg, const std::string& command, json extras = json::object()) {
  json doc = cfg.to_json();
  doc["command"] = command;
  for (auto& [k, v] : extras.items()) doc[k] = v;
  return doc;
}

void cmd_split(Settings& s) {
  const RunConfig cfg = s.resolve();
  cfg.validate();
  require_out(cfg);
  const DatasetBundle bundle = load_dataset(cfg);
  StagedOutput out(cfg.out);
  write_corpus(bundle.train, out.path(corpus_file("train", cfg.format)), cfg.format);
  write_corpus(bundle.validation, out.path(corpus_file("dev", cfg.format)), cfg.format);
  write_corpus(bundle.test, out.path(corpus_file("test", cfg.format)), cfg.format);
  out.write_json("splitspec.json", bundle.spec.to_json());
  out.write_json("vocab.json", bundle.vocab.to_json());
  out.write_json("resolved_config.json", resolved(cfg, "split"));
  out.commit();
}

void cmd_pretrain(Settings& s) {
  const RunConfig cfg = s.resolve();
  cfg.validate();
  require_out(cfg);
  if (cfg.disable_pretrain) throw ConfigError("pretrain with --disable-pretrain has nothing to do");
  const DatasetBundle bundle = load_dataset(cfg);
  std::optional<TrainReport> report;
  const Encoder model = run_pretrain(cfg, bundle, &report);
  StagedOutput out(cfg.out);
  save_checkpoint(model, out.path("model.ckpt"), checkpoint_extra(cfg, bundle, "pretrain"));
  out.write_json("train_report.json", json{{"pretrain", report->to_json()}});
  out.write_json("splitspec.json", bundle.spec.to_json());
  out.write_json("resolved_config.json", resolved(cfg, "pretrain"));
  out.commit();
}

void cmd_train(Settings& s) {
  const std::string init = s.extra_value("init");
  RunConfig cfg;
  DatasetBundle bundle;
  std::optional<Encoder> start;
  json report = json::object();
  if (!init.empty()) {
    Loaded loaded = load_with_data(s, init);
    cfg = std::move(loaded.cfg);
    bundle = std::move(loaded.bundle);
    start.emplace(std::move(loaded.model));
    set_trainability(*start, cfg);
  } else {
    cfg = s.resolve();
    cfg.validate();
    bundle = load_dataset(cfg);
    std::optional<TrainReport> pre;
    start.emplace(run_pretrain(cfg, bundle, &pre));
    if (pre) report["pretrain"] = pre->to_json();
  }
  require_out(cfg);
  TrainReport open;
  const Encoder model = run_open(cfg, bundle, std::move(*start), &open);
  report["open"] = open.to_json();
  StagedOutput out(cfg.out);
  save_checkpoint(model, out.path("model.ckpt"), checkpoint_extra(cfg, bundle, "open"));
  out.write_json("train_report.json", report);
  out.write_json("splitspec.json", bundle.spec.to_json());
  json extras = json::object();
  if (!init.empty()) extras["init"] = init;
  out.write_json("resolved_config.json", resolved(cfg, "train", extras));
  out.commit();
}

void cmd_eval(Settings& s) {
  const std::string path = s.extra_value("checkpoint");
  if (path.empty()) throw ConfigError("--checkpoint is required");
  const std::string baseline = s.extra_value("baseline", "none");
  if (baseline != "none" && baseline != "msp") throw ConfigError("--baseline must be none or msp");
  const Loaded loaded = load_with_data(s, path);
  require_out(loaded.cfg);
  const Predictor predictor =
      baseline == "msp" ? Predictor{Decision::kMsp, loaded.cfg.threshold} : Predictor{};
  const MetricsReport metrics = evaluate(loaded.model, loaded.bundle.test, loaded.bundle.vocab, predictor);
  StagedOutput out(loaded.cfg.out);
  write_eval_outputs(out, loaded.model, loaded.bundle, metrics, "", true);
  out.write_json("resolved_config.json",
                 resolved(loaded.cfg, "eval", json{{"checkpoint", path}, {"baseline", baseline}}));
  out.commit();
}

void cmd_baseline(Settings& s) {
  const std::string path = s.extra_value("checkpoint");
  RunConfig cfg;
  DatasetBundle bundle;
  std::optional<Encoder> model;
  if (!path.empty()) {
    Loaded loaded = load_with_data(s, path);
    if (loaded.stage == "open") {
      std::fprintf(stderr, "warning: %s holds an open-trained model; MSP expects a stage-1 model\n",
                   path.c_str());
    }
    cfg = std::move(loaded.cfg);
    bundle = std::move(loaded.bundle);
    model.emplace(std::move(loaded.model));
  } else {
    cfg = s.resolve();
    cfg.validate();
    if (cfg.disable_pretrain) throw ConfigError("the MSP baseline needs a pretrained model");
    bundle = load_dataset(cfg);
    model.emplace(run_pretrain(cfg, bundle, nullptr));
  }
  require_out(cfg);
  const MetricsReport metrics =
      evaluate(*model, bundle.test, bundle.vocab, Predictor{Decision::kMsp, cfg.threshold});
  StagedOutput out(cfg.out);
  write_eval_outputs(out, *model, bundle, metrics, "", false);
  json extras = json::object();
  if (!path.empty()) extras["checkpoint"] = path;
  out.write_json("resolved_config.json", resolved(cfg, "baseline", extras));
  out.commit();
}

void cmd_sweep(Settings& s) {
  const std::string param = s.extra_value("param");
  if (param.empty()) throw ConfigError("--param is required (xi, mu, alpha or n_mix)");
  const std::string init = s.extra_value("init");
  RunConfig cfg;
  DatasetBundle bundle;
  std::optional<Encoder> pretrained;
  if (!init.empty()) {
    Loaded loaded = load_with_data(s, init);
    cfg = std::move(loaded.cfg);
    bundle = std::move(loaded.bundle);
    pretrained.emplace(std::move(loaded.model));
    set_trainability(*pretrained, cfg);
  } else {
    cfg = s.resolve();
    cfg.validate();
    bundle = load_dataset(cfg);
    pretrained.emplace(run_pretrain(cfg, bundle, nullptr));
  }
  require_out(cfg);
  const std::string values_text = s.extra_value("values");
  const std::vector<double> values =
      values_text.empty() ? default_grid(param, cfg.encoder.num_layers) : parse_values(values_text);
  const auto rows = run_sweep(cfg, bundle, *pretrained, param, values);

  std::ostringstream csv;
  csv << "param,value,accuracy,macro_f1_all,macro_f1_known,f1_open,weighted_f1\n";
  for (const auto& row : rows) {
    csv << row.param << ',' << format_double(row.value) << ',' << format_double(row.metrics.accuracy) << ','
        << format_double(row.metrics.macro_f1_all) << ',' << format_double(row.metrics.macro_f1_known) << ','
        << format_double(row.metrics.f1_open) << ',' << format_double(row.metrics.weighted_f1) << '\n';
  }
  StagedOutput out(cfg.out);
  out.write_json("sweep.json", sweep_to_json(rows));
  out.write_text("sweep.csv", csv.str());
  json extras{{"param", param}};
  if (!values_text.empty()) extras["values"] = values_text;
  if (!init.empty()) extras["init"] = init;
  out.write_json("resolved_config.json", resolved(cfg, "sweep", extras));
  out.commit();
}

void cmd_run(Settings& s) {
  const RunConfig cfg = s.resolve();
  cfg.validate();
  require_out(cfg);
  const DatasetBundle bundle = load_dataset(cfg);
  const ExperimentResult result = run_experiment(cfg, bundle);
  StagedOutput out(cfg.out);
  write_eval_outputs(out, result.model, bundle, result.slmm, "", true);
  if (result.msp) write_eval_outputs(out, *result.pretrained, bundle, *result.msp, "msp_", false);
  json report{{"open", result.open_report.to_json()}};
  if (result.pretrain_report) report["pretrain"] = result.pretrain_report->to_json();
  out.write_json("train_report.json", report);
  save_checkpoint(result.model, out.path("model.ckpt"), checkpoint_extra(cfg, bundle, "open"));
  out.write_json("splitspec.json", bundle.spec.to_json());
  out.write_json("resolved_config.json", resolved(cfg, "run"));
  out.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open intent classification with soft labeling and manifold mixup"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus");
  synth_cmd->add_option("--config", synth.config, "JSON config");
  synth_cmd->add_option("--out", synth.out, "output directory");
  synth_cmd->add_option("--format", synth.format, "tsv or jsonl");
  synth_cmd->add_option("--seed", synth.synth.seed, "generator seed");
  synth_cmd->add_option("--classes", synth.synth.num_classes, "number of intents");
  synth_cmd->add_option("--tokens-per-class", synth.synth.tokens_per_class, "signature tokens per intent");
  synth_cmd->add_option("--per-class", synth.synth.samples_per_class, "utterances per intent");
  synth_cmd->add_option("--min-len", synth.synth.min_len, "shortest utterance");
  synth_cmd->add_option("--max-len", synth.synth.max_len, "longest utterance");
  synth_cmd->add_option("--noise", synth.synth.noise_rate, "probability of a shared noise token");
  synth_cmd->add_option("--noise-pool", synth.synth.noise_pool_size, "shared noise vocabulary size");

  std::vector<std::unique_ptr<Settings>> settings;
  auto command = [&](const char* name, const char* help, bool model, bool train, bool threshold) {
    CLI::App* cmd = app.add_subcommand(name, help);
    auto s = std::make_unique<Settings>(cmd);
    s->common_flags();
    s->data_flags();
    if (model) s->model_flags();
    if (train) s->train_flags();
    if (threshold) s->threshold_flag();
    settings.push_back(std::move(s));
    return std::pair{cmd, settings.back().get()};
  };

  auto [split_cmd, split_s] = command("split", "apply the known/open split and write its files", false, false, false);
  auto [pre_cmd, pre_s] = command("pretrain", "stage 1: known-class pretraining", true, true, false);
  auto [train_cmd, train_s] = command("train", "stage 2: soft labels and mixup", true, true, false);
  train_s->extra("--init", "init", "start from this stage-1 checkpoint");
  auto [eval_cmd, eval_s] = command("eval", "evaluate a checkpoint on the test split", false, false, true);
  eval_s->extra("--checkpoint", "checkpoint", "model checkpoint");
  eval_s->extra("--baseline", "baseline", "none or msp");
  auto [base_cmd, base_s] = command("baseline", "MSP baseline on a stage-1 model", true, true, true);
  base_s->extra("--checkpoint", "checkpoint", "stage-1 checkpoint (pretrains when absent)");
  auto [sweep_cmd, sweep_s] = command("sweep", "stage 2 over a grid of one hyperparameter", true, true, false);
  sweep_s->extra("--param", "param", "xi, mu, alpha or n_mix");
  sweep_s->extra("--values", "values", "comma-separated grid (default: the standard grid)");
  sweep_s->extra("--init", "init", "stage-1 checkpoint to start every point from");
  auto [run_cmd, run_s] = command("run", "pretrain, MSP baseline, open training and evaluation", true, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "slmm: error: %s\n", e.what());
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (synth_cmd->parsed()) cmd_synth(synth, synth_cmd);
    if (split_cmd->parsed()) cmd_split(*split_s);
    if (pre_cmd->parsed()) cmd_pretrain(*pre_s);
    if (train_cmd->parsed()) cmd_train(*train_s);
    if (eval_cmd->parsed()) cmd_eval(*eval_s);
    if (base_cmd->parsed()) cmd_baseline(*base_s);
    if (sweep_cmd->parsed()) cmd_sweep(*sweep_s);
    if (run_cmd->parsed()) cmd_run(*run_s);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "slmm: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
