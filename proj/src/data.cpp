#include "slmm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "slmm/error.hpp"
#include "slmm/rng.hpp"

namespace slmm {

namespace {

std::string location(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

class LabelRegistry {
 public:
  int intern(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()) + 1);
    if (inserted) names_.push_back(name);
    return it->second;
  }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
};

std::vector<Utterance> read_records(const std::filesystem::path& path, CorpusFormat format,
                                    LabelRegistry& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::string text;
    std::string label;
    if (format == CorpusFormat::kTsv) {
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) {
        throw DataError(location(path, line_no) + "expected text<TAB>label");
      }
      text = line.substr(0, tab);
      label = line.substr(tab + 1);
    } else {
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(location(path, line_no) + "invalid JSON: " + e.what());
      }
      if (!record.is_object() || !record.contains("text") || !record.contains("label")) {
        throw DataError(location(path, line_no) + "record needs \"text\" and \"label\" fields");
      }
      if (!record["text"].is_string()) {
        throw DataError(location(path, line_no) + "\"text\" must be a string");
      }
      text = record["text"].get<std::string>();
      const auto& raw_label = record["label"];
      label = raw_label.is_string() ? raw_label.get<std::string>() : raw_label.dump();
    }
    Utterance utt;
    utt.tokens = tokenize(text);
    if (utt.tokens.empty()) throw DataError(location(path, line_no) + "empty text");
    if (label.empty()) throw DataError(location(path, line_no) + "empty label");
    utt.label = labels.intern(label);
    utt.raw_text = std::move(text);
    out.push_back(std::move(utt));
  }
  if (out.empty()) throw DataError("corpus file " + path.string() + " is empty");
  return out;
}

Corpus remap_corpus(const Corpus& source, const SplitSpec& spec, bool keep_open,
                    const std::vector<std::string>& names) {
  Corpus out;
  out.intent_names = names;
  for (const auto& utt : source.utterances) {
    const int mapped = spec.remap(utt.label);
    if (mapped == spec.open_label() && !keep_open) continue;
    Utterance copy = utt;
    copy.label = mapped;
    out.utterances.push_back(std::move(copy));
  }
  return out;
}

}  // namespace

void Corpus::validate() const {
  const int classes = num_classes();
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& utt = utterances[i];
    if (utt.tokens.empty()) {
      throw DataError("utterance " + std::to_string(i) + " has no tokens");
    }
    if (utt.label < 1 || utt.label > classes) {
      throw DataError("utterance " + std::to_string(i) + " has label " +
                      std::to_string(utt.label) + " outside 1.." + std::to_string(classes));
    }
  }
}

CorpusFormat parse_format(std::string_view name) {
  if (name == "tsv") return CorpusFormat::kTsv;
  if (name == "jsonl") return CorpusFormat::kJsonl;
  throw ConfigError("unknown corpus format '" + std::string(name) + "' (expected tsv or jsonl)");
}

std::string_view format_name(CorpusFormat format) {
  return format == CorpusFormat::kTsv ? "tsv" : "jsonl";
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return load_corpora({path}, format).front();
}

std::vector<Corpus> load_corpora(const std::vector<std::filesystem::path>& paths,
                                 CorpusFormat format) {
  LabelRegistry labels;
  std::vector<Corpus> out;
  for (const auto& path : paths) {
    Corpus corpus;
    corpus.utterances = read_records(path, format, labels);
    out.push_back(std::move(corpus));
  }
  for (auto& corpus : out) corpus.intent_names = labels.names();
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  for (const auto& utt : corpus.utterances) {
    std::string text = utt.raw_text;
    if (text.empty()) {
      for (std::size_t i = 0; i < utt.tokens.size(); ++i) {
        if (i > 0) text.push_back(' ');
        text += utt.tokens[i];
      }
    }
    const auto& label = corpus.intent_names.at(static_cast<std::size_t>(utt.label - 1));
    if (format == CorpusFormat::kTsv) {
      out << text << '\t' << label << '\n';
    } else {
      out << nlohmann::json{{"text", text}, {"label", label}}.dump() << '\n';
    }
  }
  if (!out) throw DataError("failed writing corpus file " + path.string());
}

// --- Vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary() : tokens_{"[PAD]", "[UNK]", "[CLS]"} {
  for (int i = 0; i < kFirstTokenId; ++i) ids_.emplace(tokens_[static_cast<std::size_t>(i)], i);
}

Vocabulary Vocabulary::build(const Corpus& train, int min_count) {
  if (train.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, int> counts;
  for (const auto& utt : train.utterances) {
    for (const auto& tok : utt.tokens) ++counts[tok];
  }
  Vocabulary vocab;
  for (const auto& [token, count] : counts) {
    if (count < min_count || vocab.ids_.contains(token)) continue;
    vocab.ids_.emplace(token, vocab.size());
    vocab.tokens_.push_back(token);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return ids_.contains(std::string(token));
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(id(tok));
  return ids;
}

nlohmann::json Vocabulary::to_json() const {
  return nlohmann::json{{"tokens", tokens_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  const auto tokens = doc.at("tokens").get<std::vector<std::string>>();
  if (tokens.size() < static_cast<std::size_t>(kFirstTokenId)) {
    throw DataError("vocabulary is missing its reserved tokens");
  }
  Vocabulary vocab;
  for (std::size_t i = kFirstTokenId; i < tokens.size(); ++i) {
    if (!vocab.ids_.emplace(tokens[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens[i] + "'");
    }
    vocab.tokens_.push_back(tokens[i]);
  }
  return vocab;
}

// --- Splits -----------------------------------------------------------------

int SplitSpec::remap(int original_id) const {
  if (original_id < 1 || original_id >= static_cast<int>(label_map.size())) {
    throw DataError("label " + std::to_string(original_id) + " is outside the split's label space");
  }
  return label_map[static_cast<std::size_t>(original_id)];
}

nlohmann::json SplitSpec::to_json() const {
  nlohmann::json known = nlohmann::json::array();
  for (int id : known_classes) known.push_back(intent_names[static_cast<std::size_t>(id - 1)]);
  nlohmann::json mapping = nlohmann::json::object();
  for (std::size_t id = 1; id < label_map.size(); ++id) {
    mapping[intent_names[id - 1]] = label_map[id];
  }
  return nlohmann::json{{"known_ratio", known_ratio}, {"seed", seed},
                        {"num_known", num_known},     {"intent_names", intent_names},
                        {"known_class_names", known}, {"label_map", mapping}};
}

SplitSpec SplitSpec::from_json(const nlohmann::json& doc) {
  SplitSpec spec;
  spec.known_ratio = doc.at("known_ratio").get<double>();
  spec.seed = doc.at("seed").get<std::uint64_t>();
  spec.intent_names = doc.at("intent_names").get<std::vector<std::string>>();
  const auto known_names = doc.at("known_class_names").get<std::vector<std::string>>();
  const auto& mapping = doc.at("label_map");
  spec.num_known = static_cast<int>(known_names.size());
  spec.label_map.assign(spec.intent_names.size() + 1, 0);
  for (std::size_t id = 1; id <= spec.intent_names.size(); ++id) {
    const auto& name = spec.intent_names[id - 1];
    if (!mapping.contains(name)) throw DataError("split spec label_map misses '" + name + "'");
    spec.label_map[id] = mapping.at(name).get<int>();
    if (spec.label_map[id] < 1 || spec.label_map[id] > spec.num_known + 1) {
      throw DataError("split spec maps '" + name + "' outside 1..K+1");
    }
    if (spec.label_map[id] <= spec.num_known) spec.known_classes.push_back(static_cast<int>(id));
  }
  if (static_cast<int>(spec.known_classes.size()) != spec.num_known) {
    throw DataError("split spec label_map disagrees with known_class_names");
  }
  return spec;
}

int known_class_count(double known_ratio, int total_classes) {
  if (!(known_ratio > 0.0 && known_ratio <= 1.0)) {
    throw ConfigError("known_ratio must lie in (0, 1]");
  }
  // the epsilon absorbs representation error such as 0.3 * 10 = 3.0000000000000004
  return static_cast<int>(std::ceil(known_ratio * total_classes - 1e-9));
}

std::vector<int> select_known_classes(const std::vector<std::string>& intent_names,
                                      double known_ratio, std::uint64_t seed) {
  const int total = static_cast<int>(intent_names.size());
  const int known = known_class_count(known_ratio, total);
  if (known == 0) throw ConfigError("known_ratio selects no known classes");
  std::vector<int> by_name(static_cast<std::size_t>(total));
  std::iota(by_name.begin(), by_name.end(), 1);
  std::stable_sort(by_name.begin(), by_name.end(), [&](int a, int b) {
    return intent_names[static_cast<std::size_t>(a - 1)] < intent_names[static_cast<std::size_t>(b - 1)];
  });
  auto rng = make_rng(seed, "split.classes");
  std::shuffle(by_name.begin(), by_name.end(), rng);
  std::vector<int> chosen(by_name.begin(), by_name.begin() + known);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

SplitSpec make_split_spec(const std::vector<std::string>& intent_names, double known_ratio,
                          std::uint64_t seed) {
  if (intent_names.size() < 2) throw ConfigError("a split needs at least 2 intent classes");
  SplitSpec spec;
  spec.known_ratio = known_ratio;
  spec.seed = seed;
  spec.intent_names = intent_names;
  spec.known_classes = select_known_classes(intent_names, known_ratio, seed);
  spec.num_known = static_cast<int>(spec.known_classes.size());

  // known classes take ids 1..K in name order
  std::vector<int> named = spec.known_classes;
  std::stable_sort(named.begin(), named.end(), [&](int a, int b) {
    return intent_names[static_cast<std::size_t>(a - 1)] < intent_names[static_cast<std::size_t>(b - 1)];
  });
  spec.label_map.assign(intent_names.size() + 1, spec.open_label());
  spec.label_map[0] = 0;
  for (std::size_t i = 0; i < named.size(); ++i) {
    spec.label_map[static_cast<std::size_t>(named[i])] = static_cast<int>(i) + 1;
  }
  return spec;
}

PartitionedCorpus partition_stratified(const Corpus& full, std::uint64_t seed) {
  full.validate();
  auto rng = make_rng(seed, "split.partition");
  enum Part : std::uint8_t { kTrain, kValidation, kTest };
  std::vector<Part> assignment(full.size(), kTrain);
  for (int cls = 1; cls <= full.num_classes(); ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < full.size(); ++i) {
      if (full.utterances[i].label == cls) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n = members.size();
    std::size_t n_val = n / 10;
    std::size_t n_test = n / 10;
    if (n >= 2 && n_test == 0) n_test = 1;
    for (std::size_t k = 0; k < n_val; ++k) assignment[members[k]] = kValidation;
    for (std::size_t k = n_val; k < n_val + n_test; ++k) assignment[members[k]] = kTest;
  }
  PartitionedCorpus parts;
  for (Corpus* c : {&parts.train, &parts.validation, &parts.test}) c->intent_names = full.intent_names;
  for (std::size_t i = 0; i < full.size(); ++i) {
    Corpus& target = assignment[i] == kTrain ? parts.train
                     : assignment[i] == kValidation ? parts.validation
                                                    : parts.test;
    target.utterances.push_back(full.utterances[i]);
  }
  return parts;
}

DatasetBundle apply_split(const PartitionedCorpus& parts, const SplitSpec& spec,
                          int vocab_min_count) {
  std::vector<std::string> names(static_cast<std::size_t>(spec.num_known));
  for (int id : spec.known_classes) {
    names[static_cast<std::size_t>(spec.remap(id) - 1)] = spec.intent_names[static_cast<std::size_t>(id - 1)];
  }
  names.emplace_back(kOpenIntentName);

  DatasetBundle bundle;
  bundle.spec = spec;
  bundle.train = remap_corpus(parts.train, spec, false, names);
  bundle.validation = remap_corpus(parts.validation, spec, false, names);
  bundle.test = remap_corpus(parts.test, spec, true, names);
  if (bundle.train.empty()) throw DataError("split leaves no training utterances");
  if (spec.num_known < static_cast<int>(spec.intent_names.size())) {
    const bool has_open = std::any_of(bundle.test.utterances.begin(), bundle.test.utterances.end(),
                                      [&](const Utterance& u) { return u.label == spec.open_label(); });
    if (!has_open) throw DataError("split leaves no open-class utterances in the test set");
  }
  bundle.vocab = Vocabulary::build(bundle.train, vocab_min_count);
  return bundle;
}

DatasetBundle make_split(const Corpus& full, double known_ratio, std::uint64_t seed,
                         int vocab_min_count) {
  const auto spec = make_split_spec(full.intent_names, known_ratio, seed);
  return apply_split(partition_stratified(full, seed), spec, vocab_min_count);
}

DatasetBundle make_split(const PartitionedCorpus& parts, double known_ratio, std::uint64_t seed,
                         int vocab_min_count) {
  for (const Corpus* c : {&parts.train, &parts.validation, &parts.test}) c->validate();
  const auto spec = make_split_spec(parts.train.intent_names, known_ratio, seed);
  return apply_split(parts, spec, vocab_min_count);
}

EncodedCorpus encode_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  EncodedCorpus out;
  out.ids.reserve(corpus.size());
  out.labels.reserve(corpus.size());
  for (const auto& utt : corpus.utterances) {
    out.ids.push_back(vocab.encode(utt.tokens));
    out.labels.push_back(utt.label);
  }
  return out;
}

std::vector<Batch> make_batches(std::size_t count, int batch_size, bool shuffle,
                                std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(derive_seed(derive_seed(seed, "batches") + static_cast<std::uint64_t>(epoch), "epoch"));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> batches;
  const auto step = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < count; start += step) {
    const auto end = std::min(count, start + step);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Corpus generate_synthetic(const SyntheticConfig& config) {
  if (config.num_classes < 1 || config.tokens_per_class < 1 || config.samples_per_class < 1 ||
      config.noise_pool_size < 1 || config.min_len < 1 || config.max_len < config.min_len) {
    throw ConfigError("synthetic corpus counts must be >= 1 and min_len <= max_len");
  }
  if (!(config.noise_rate >= 0.0 && config.noise_rate < 1.0)) {
    throw ConfigError("noise_rate must lie in [0, 1)");
  }
  auto rng = make_rng(config.seed, "synthetic");
  std::uniform_int_distribution<int> length(config.min_len, config.max_len);
  std::uniform_int_distribution<int> signature(0, config.tokens_per_class - 1);
  std::uniform_int_distribution<int> noise(0, config.noise_pool_size - 1);
  std::bernoulli_distribution noisy(config.noise_rate);

  Corpus corpus;
  for (int c = 0; c < config.num_classes; ++c) {
    std::ostringstream name;
    name << "intent_" << c;
    corpus.intent_names.push_back(name.str());
  }
  for (int c = 0; c < config.num_classes; ++c) {
    for (int s = 0; s < config.samples_per_class; ++s) {
      Utterance utt;
      utt.label = c + 1;
      const int len = length(rng);
      for (int t = 0; t < len; ++t) {
        std::ostringstream tok;
        if (noisy(rng)) {
          tok << "noise" << noise(rng);
        } else {
          tok << "c" << c << "w" << signature(rng);
        }
        if (t > 0) utt.raw_text.push_back(' ');
        utt.raw_text += tok.str();
        utt.tokens.push_back(tok.str());
      }
      corpus.utterances.push_back(std::move(utt));
    }
  }
  return corpus;
}

}  // namespace slmm
