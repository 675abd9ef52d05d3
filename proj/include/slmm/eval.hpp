#pragma once

#include <cstddef>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slmm/data.hpp"
#include "slmm/encoder.hpp"

namespace slmm {

struct MetricsReport {
  int num_known = 0;
  std::size_t size = 0;
  double accuracy = 0.0;
  double macro_f1_all = 0.0;
  double macro_f1_known = 0.0;
  double f1_open = 0.0;
  double weighted_f1 = 0.0;
  std::optional<double> acc_kok;  // needs model access, see evaluate()
  std::vector<double> precision;  // per class 1..K+1
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  std::vector<std::vector<std::size_t>> confusion;  // rows gold, cols predicted

  double open_recall() const { return recall.empty() ? 0.0 : recall.back(); }
  nlohmann::json to_json() const;
};

/// Argmax over the K+1 logits as a 1-based class id (ties to the lowest id).
int predict_from_logits(const RowVector& logits);
int predict(const Encoder& model, std::span<const int> token_ids);

/// Maximum-softmax-probability rejection over the K known logits: the open
/// class K+1 when the top probability is below `threshold`.
int msp_from_logits(const RowVector& known_logits, double threshold);
int msp_predict(const Encoder& model, std::span<const int> token_ids, double threshold = 0.5);

/// Per-class precision/recall/F1 with 0/0 := 0; macro scores are unweighted
/// means (classes without support still count), weighted F1 uses support.
MetricsReport compute_metrics(std::span<const int> preds, std::span<const int> golds, int num_known);

enum class Decision { kOpenClassifier, kMsp };

struct Predictor {
  Decision decision = Decision::kOpenClassifier;
  double threshold = 0.5;
};

/// Predicts every test utterance and fills all metrics including Acc-KoK,
/// the K-way restricted accuracy on gold-known samples.
MetricsReport evaluate(const Encoder& model, const Corpus& test, const Vocabulary& vocab,
                       const Predictor& predictor);

/// CSV with a header row and a header column of class names.
void dump_confusion(const MetricsReport& report, const std::vector<std::string>& class_names,
                    const std::filesystem::path& path);

/// TSV: gold label followed by the D intent-representation values.
void dump_embeddings(const Encoder& model, const Corpus& corpus, const Vocabulary& vocab,
                     const std::filesystem::path& path);

/// Shortest round-trip decimal text of a double ('.' separator).
std::string format_double(double value);

}  // namespace slmm
