#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace slmm {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kFirstTokenId = 3;

/// Name given to the proxy class K+1 in remapped corpora.
inline constexpr std::string_view kOpenIntentName = "<open>";

struct Utterance {
  std::vector<std::string> tokens;
  int label = 0;  // 1-based intent id
  std::string raw_text;
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::vector<std::string> intent_names;

  int num_classes() const { return static_cast<int>(intent_names.size()); }
  std::size_t size() const { return utterances.size(); }
  bool empty() const { return utterances.empty(); }

  /// Throws DataError when a label is out of range or an utterance is empty.
  void validate() const;
};

enum class CorpusFormat { kTsv, kJsonl };

CorpusFormat parse_format(std::string_view name);
std::string_view format_name(CorpusFormat format);

/// Lowercase whitespace tokenisation.
std::vector<std::string> tokenize(std::string_view text);

/// Loads a corpus. Intent names are registered in first-appearance order.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// Loads several files that share one label space (e.g. train/dev/test of a
/// benchmark), registering intent names across all of them in file order.
std::vector<Corpus> load_corpora(const std::vector<std::filesystem::path>& paths,
                                 CorpusFormat format);

void write_corpus(const Corpus& corpus, const std::filesystem::path& path,
                  CorpusFormat format);

class Vocabulary {
 public:
  Vocabulary();

  /// Every token whose training count reaches `min_count` gets an id; ids are
  /// assigned in lexicographic token order so the mapping depends only on the
  /// token counts.
  static Vocabulary build(const Corpus& train, int min_count);

  int id(std::string_view token) const;
  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  bool contains(std::string_view token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& doc);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct SplitSpec {
  double known_ratio = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> intent_names;  // original label space
  std::vector<int> known_classes;         // original ids, ascending
  int num_known = 0;                      // K
  std::vector<int> label_map;             // index = original id; [0] unused

  int open_label() const { return num_known + 1; }
  int remap(int original_id) const;

  nlohmann::json to_json() const;
  static SplitSpec from_json(const nlohmann::json& doc);
};

struct DatasetBundle {
  Corpus train;       // known classes only, labels 1..K
  Corpus validation;  // known classes only, labels 1..K
  Corpus test;        // every class, open ones remapped to K+1
  SplitSpec spec;
  Vocabulary vocab;   // built from train only

  int num_known() const { return spec.num_known; }
};

struct PartitionedCorpus {
  Corpus train;
  Corpus validation;
  Corpus test;
};

/// Number of known classes for a ratio: ceil(ratio * total).
int known_class_count(double known_ratio, int total_classes);

/// Seeded uniform draw of known classes (original ids, ascending).
std::vector<int> select_known_classes(const std::vector<std::string>& intent_names,
                                      double known_ratio, std::uint64_t seed);

SplitSpec make_split_spec(const std::vector<std::string>& intent_names,
                          double known_ratio, std::uint64_t seed);

/// Seeded stratified 80/10/10 utterance partition per class.
PartitionedCorpus partition_stratified(const Corpus& full, std::uint64_t seed);

/// Applies a known/open class split to an already-partitioned corpus.
DatasetBundle apply_split(const PartitionedCorpus& parts, const SplitSpec& spec,
                          int vocab_min_count = 1);

DatasetBundle make_split(const Corpus& full, double known_ratio, std::uint64_t seed,
                         int vocab_min_count = 1);
DatasetBundle make_split(const PartitionedCorpus& parts, double known_ratio,
                         std::uint64_t seed, int vocab_min_count = 1);

/// Token ids and labels of a corpus under a fixed vocabulary.
struct EncodedCorpus {
  std::vector<std::vector<int>> ids;
  std::vector<int> labels;

  std::size_t size() const { return ids.size(); }
};

EncodedCorpus encode_corpus(const Corpus& corpus, const Vocabulary& vocab);

using Batch = std::vector<std::size_t>;

/// Index batches covering `count` items once. The order is a function of
/// (seed, epoch) only; the final short batch is kept.
std::vector<Batch> make_batches(std::size_t count, int batch_size, bool shuffle,
                                std::uint64_t seed, int epoch);

struct SyntheticConfig {
  int num_classes = 8;
  int tokens_per_class = 20;
  int samples_per_class = 100;
  int min_len = 4;
  int max_len = 12;
  double noise_rate = 0.1;
  int noise_pool_size = 40;
  std::uint64_t seed = 0;
};

/// Desk-scale corpus: every class owns a disjoint signature vocabulary and
/// each token is drawn from it with probability 1 - noise_rate, otherwise
/// from a shared noise pool.
Corpus generate_synthetic(const SyntheticConfig& config);

}  // namespace slmm
