#include "slmm/eval.hpp"

#include <charconv>
#include <fstream>

#include "slmm/error.hpp"

namespace slmm {

namespace {

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted.push_back('"');
    quoted.push_back(c);
  }
  quoted.push_back('"');
  return quoted;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json doc{{"num_known", num_known},
                     {"size", size},
                     {"accuracy", accuracy},
                     {"macro_f1_all", macro_f1_all},
                     {"macro_f1_known", macro_f1_known},
                     {"f1_open", f1_open},
                     {"weighted_f1", weighted_f1},
                     {"open_recall", open_recall()},
                     {"precision", precision},
                     {"recall", recall},
                     {"f1", f1},
                     {"support", support},
                     {"confusion", confusion}};
  doc["acc_kok"] = acc_kok ? nlohmann::json(*acc_kok) : nlohmann::json(nullptr);
  return doc;
}

int predict_from_logits(const RowVector& logits) { return argmax(logits) + 1; }

int predict(const Encoder& model, std::span<const int> token_ids) {
  return predict_from_logits(model.logits(token_ids));
}

int msp_from_logits(const RowVector& known_logits, double threshold) {
  const RowVector probs = softmax(known_logits);
  const int best = argmax(probs);
  if (probs[best] < threshold) return static_cast<int>(known_logits.size()) + 1;
  return best + 1;
}

int msp_predict(const Encoder& model, std::span<const int> token_ids, double threshold) {
  const RowVector z = model.represent(token_ids);
  return msp_from_logits(model.classify(z, model.num_known()), threshold);
}

MetricsReport compute_metrics(std::span<const int> preds, std::span<const int> golds, int num_known) {
  if (preds.size() != golds.size()) throw ConfigError("predictions and gold labels differ in length");
  if (num_known < 1) throw ConfigError("compute_metrics needs K >= 1");
  const auto classes = static_cast<std::size_t>(num_known) + 1;
  MetricsReport r;
  r.num_known = num_known;
  r.size = golds.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const int g = golds[i];
    const int p = preds[i];
    if (g < 1 || g > num_known + 1 || p < 1 || p > num_known + 1) {
      throw ConfigError("label out of range 1..K+1 at position " + std::to_string(i));
    }
    ++r.confusion[static_cast<std::size_t>(g - 1)][static_cast<std::size_t>(p - 1)];
  }

  std::size_t trace = 0;
  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  r.f1.assign(classes, 0.0);
  r.support.assign(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t predicted = 0;
    for (std::size_t g = 0; g < classes; ++g) {
      r.support[c] += r.confusion[c][g];
      predicted += r.confusion[g][c];
    }
    const auto tp = static_cast<double>(r.confusion[c][c]);
    trace += r.confusion[c][c];
    r.precision[c] = ratio(tp, static_cast<double>(predicted));
    r.recall[c] = ratio(tp, static_cast<double>(r.support[c]));
    r.f1[c] = ratio(2.0 * r.precision[c] * r.recall[c], r.precision[c] + r.recall[c]);
  }
  r.accuracy = ratio(static_cast<double>(trace), static_cast<double>(r.size));

  double known_sum = 0.0;
  double weighted = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (c + 1 < classes) known_sum += r.f1[c];
    weighted += r.f1[c] * static_cast<double>(r.support[c]);
  }
  r.f1_open = r.f1.back();
  r.macro_f1_known = known_sum / static_cast<double>(num_known);
  r.macro_f1_all = (known_sum + r.f1_open) / static_cast<double>(classes);
  r.weighted_f1 = ratio(weighted, static_cast<double>(r.size));
  return r;
}

MetricsReport evaluate(const Encoder& model, const Corpus& test, const Vocabulary& vocab,
                       const Predictor& predictor) {
  const int K = model.num_known();
  std::vector<int> preds;
  std::vector<int> golds;
  std::size_t known_total = 0;
  std::size_t known_correct = 0;
  for (const auto& utt : test.utterances) {
    const std::vector<int> ids = vocab.encode(utt.tokens);
    const RowVector z = model.represent(ids);
    const RowVector logits = model.classify(z, K + 1);
    const RowVector known = logits.head(K);
    preds.push_back(predictor.decision == Decision::kMsp ? msp_from_logits(known, predictor.threshold)
                                                          : predict_from_logits(logits));
    golds.push_back(utt.label);
    if (utt.label <= K) {
      ++known_total;
      if (argmax(known) + 1 == utt.label) ++known_correct;
    }
  }
  MetricsReport report = compute_metrics(preds, golds, K);
  report.acc_kok = ratio(static_cast<double>(known_correct), static_cast<double>(known_total));
  return report;
}

void dump_confusion(const MetricsReport& report, const std::vector<std::string>& class_names,
                    const std::filesystem::path& path) {
  if (class_names.size() != report.confusion.size()) {
    throw ConfigError("dump_confusion: class name count differs from the matrix size");
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "gold\\predicted";
  for (const auto& name : class_names) out << ',' << csv_field(name);
  out << '\n';
  for (std::size_t g = 0; g < report.confusion.size(); ++g) {
    out << csv_field(class_names[g]);
    for (auto count : report.confusion[g]) out << ',' << count;
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

void dump_embeddings(const Encoder& model, const Corpus& corpus, const Vocabulary& vocab,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& utt : corpus.utterances) {
    const RowVector z = model.represent(vocab.encode(utt.tokens));
    out << utt.label;
    for (Eigen::Index d = 0; d < z.size(); ++d) out << '\t' << format_double(z[d]);
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace slmm
