#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "slmm/error.hpp"
#include "slmm/eval.hpp"
#include "slmm/mixup.hpp"
#include "slmm/run.hpp"
#include "slmm/softlabel.hpp"

namespace py = pybind11;
using namespace slmm;

namespace {

py::object to_python(const nlohmann::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

nlohmann::json from_python(const py::object& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

// A loaded checkpoint together with the vocabulary it was trained with.
class Classifier {
 public:
  explicit Classifier(const std::string& path) : ckpt_(load_checkpoint(path)) {
    if (!ckpt_.extra.contains("vocab")) throw DataError(path + " carries no vocabulary");
    vocab_ = Vocabulary::from_json(ckpt_.extra.at("vocab"));
    if (ckpt_.extra.contains("splitspec")) {
      const SplitSpec spec = SplitSpec::from_json(ckpt_.extra.at("splitspec"));
      names_.resize(static_cast<std::size_t>(spec.num_known));
      for (int id : spec.known_classes) {
        names_[static_cast<std::size_t>(spec.remap(id) - 1)] = spec.intent_names[static_cast<std::size_t>(id - 1)];
      }
      names_.emplace_back(kOpenIntentName);
    }
  }

  std::vector<int> encode(const std::string& text) const { return vocab_.encode(tokenize(text)); }
  RowVector represent(const std::string& text) const { return ckpt_.model.represent(encode(text)); }
  RowVector logits(const std::string& text) const { return ckpt_.model.logits(encode(text)); }
  int predict(const std::string& text) const { return slmm::predict(ckpt_.model, encode(text)); }
  int msp(const std::string& text, double threshold) const {
    return msp_predict(ckpt_.model, encode(text), threshold);
  }
  int num_known() const { return ckpt_.model.num_known(); }
  const std::vector<std::string>& class_names() const { return names_; }
  py::object extra() const { return to_python(ckpt_.extra); }

 private:
  Checkpoint ckpt_;
  Vocabulary vocab_;
  std::vector<std::string> names_;
};

}  // namespace

PYBIND11_MODULE(pyslmm, m) {
  m.doc() = "Open intent classification with soft labeling and manifold mixup";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def(
      "synthetic_corpus",
      [](int num_classes, int samples_per_class, double noise_rate, std::uint64_t seed) {
        SyntheticConfig cfg;
        cfg.num_classes = num_classes;
        cfg.samples_per_class = samples_per_class;
        cfg.noise_rate = noise_rate;
        cfg.seed = seed;
        const Corpus c = generate_synthetic(cfg);
        std::vector<std::pair<std::string, std::string>> rows;
        for (const auto& u : c.utterances) {
          std::string text;
          for (const auto& t : u.tokens) text += (text.empty() ? "" : " ") + t;
          rows.emplace_back(std::move(text), c.intent_names[static_cast<std::size_t>(u.label - 1)]);
        }
        return rows;
      },
      py::arg("num_classes") = 8, py::arg("samples_per_class") = 100, py::arg("noise_rate") = 0.1,
      py::arg("seed") = 0, "(text, intent) pairs of a synthetic corpus");

  m.def("known_class_count", &known_class_count, py::arg("known_ratio"), py::arg("total_classes"));

  m.def(
      "soften", [](int gold, int num_known, double xi) { return soften(gold, num_known, xi).probs; },
      py::arg("gold"), py::arg("num_known"), py::arg("xi"), "soft (K+1)-way target of a known-class sample");

  m.def(
      "kl_loss",
      [](const std::vector<std::vector<double>>& targets, const Matrix& logits) {
        std::vector<SoftLabelDistribution> dists;
        for (const auto& p : targets) dists.push_back({p, 0.0});
        LossWithGrad out = kl_loss(dists, logits);
        return std::pair{out.value, out.grad};
      },
      py::arg("targets"), py::arg("logits"), "batch-mean KL divergence and its logit gradient");

  m.def(
      "mixup_loss",
      [](const Matrix& logits) {
        LossWithGrad out = mixup_loss(logits);
        return std::pair{out.value, out.grad};
      },
      py::arg("logits"), "mean cross-entropy of every row against the last class");

  m.def(
      "compute_metrics",
      [](const std::vector<int>& preds, const std::vector<int>& golds, int num_known) {
        return to_python(compute_metrics(preds, golds, num_known).to_json());
      },
      py::arg("preds"), py::arg("golds"), py::arg("num_known"));

  m.def(
      "run",
      [](const py::dict& config) {
        const RunConfig cfg = RunConfig::from_json(from_python(config));
        cfg.validate();
        nlohmann::json doc;
        {
          py::gil_scoped_release release;
          const DatasetBundle bundle = load_dataset(cfg);
          const ExperimentResult r = run_experiment(cfg, bundle);
          doc["slmm"] = r.slmm.to_json();
          doc["msp"] = r.msp ? r.msp->to_json() : nlohmann::json(nullptr);
          doc["open_report"] = r.open_report.to_json();
          doc["pretrain_report"] = r.pretrain_report ? r.pretrain_report->to_json() : nlohmann::json(nullptr);
        }
        return to_python(doc);
      },
      py::arg("config"), "pretrain, MSP baseline, open training and evaluation for one config");

  py::class_<Classifier>(m, "Classifier")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def("encode", &Classifier::encode, py::arg("text"))
      .def("represent", &Classifier::represent, py::arg("text"))
      .def("logits", &Classifier::logits, py::arg("text"))
      .def("predict", &Classifier::predict, py::arg("text"), "1-based class id; K+1 is the open class")
      .def("msp_predict", &Classifier::msp, py::arg("text"), py::arg("threshold") = 0.5)
      .def_property_readonly("num_known", &Classifier::num_known)
      .def_property_readonly("class_names", &Classifier::class_names)
      .def_property_readonly("extra", &Classifier::extra);
}
