#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slmm/tensor.hpp"

namespace slmm {

/// Which parameter groups receive optimizer updates. Layer indices are 1-based.
struct Trainability {
  std::vector<int> layers;
  bool embeddings = false;
  bool head = true;        // dense intent head h
  bool classifier = true;  // (K+1)-way linear classifier

  static Trainability all(int num_layers);
  /// Everything except the embeddings and layers 1..T-1.
  static Trainability last_layer(int num_layers);

  bool layer(int index) const;
  bool empty() const { return layers.empty() && !embeddings && !head && !classifier; }
};

struct EncoderConfig {
  int num_layers = 4;   // T
  int hidden = 64;      // H
  int intent_dim = 64;  // D
  int num_heads = 4;
  int ffn_dim = 256;
  int max_len = 32;     // tokens, excluding CLS
  int vocab_size = 0;
  int num_known = 0;    // K; the classifier carries K+1 rows
  double init_std = 0.02;
  std::uint64_t seed = 0;
  Trainability trainable = Trainability::last_layer(4);

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& doc);
};

/// Padded batch of hidden states. values[b] is (len + 1) x H with the CLS
/// position first.
struct HiddenStates {
  std::vector<Matrix> values;
  std::vector<Mask> masks;

  std::size_t batch() const { return values.size(); }
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

/// Arithmetic mean over the unmasked rows of `h`.
RowVector mean_pool(const Matrix& h, const Mask& mask);

/// Activations of one encoder layer kept for the backward pass.
struct LayerTrace {
  Matrix input;
  Matrix ln1_hat;
  Eigen::VectorXd ln1_rstd;
  Matrix normed1;
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, L x L
  Matrix context;
  Matrix mid;
  Matrix ln2_hat;
  Eigen::VectorXd ln2_rstd;
  Matrix normed2;
  Matrix ffn_pre;
  Matrix ffn_act;
};

/// A traced pass through layers (from, to] of a single padded sequence.
struct StackTrace {
  int from = 0;
  Mask mask;
  std::vector<LayerTrace> layers;  // layers[i] is layer from + 1 + i
  Matrix output;

  /// Output of layer `index` (from <= index <= to).
  const Matrix& output_of(int index) const;
};

/// Pooling + intent head activations of one sequence.
struct HeadTrace {
  Mask mask;
  Eigen::Index rows = 0;
  RowVector pooled;
  RowVector pre;
  RowVector z;
};

/// Layer-indexed text encoder: token + position embeddings, T pre-norm
/// self-attention blocks, mean pooling, a ReLU intent head and a (K+1)-way
/// linear classifier whose first K rows form the known-class classifier.
class Encoder {
 public:
  explicit Encoder(EncoderConfig config);
  Encoder(const Encoder& other);
  Encoder& operator=(const Encoder& other);
  Encoder(Encoder&&) noexcept;
  Encoder& operator=(Encoder&&) noexcept;
  ~Encoder();

  const EncoderConfig& config() const { return config_; }
  int num_layers() const { return config_.num_layers; }
  int num_known() const { return config_.num_known; }

  /// Prepends CLS; inputs longer than max_len are truncated and counted.
  HiddenStates embed(std::span<const int> token_ids) const;
  /// Embeds several sequences padded to the longest one.
  HiddenStates embed_batch(const std::vector<std::vector<int>>& sequences) const;
  /// Applies layers from_layer+1 .. to_layer.
  HiddenStates forward_layers(const HiddenStates& h, int from_layer, int to_layer) const;
  RowVector intent_head(const RowVector& pooled) const;
  /// First `num_classes` logits of the shared head; num_classes is K or K+1.
  RowVector classify(const RowVector& z, int num_classes) const;

  /// Full forward to the intent representation z.
  RowVector represent(std::span<const int> token_ids) const;
  /// Full forward to the K+1 logits.
  RowVector logits(std::span<const int> token_ids) const;

  /// Known-class classifier: a view onto the first K rows of the (K+1)-way head.
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> known_classifier_weight() const;
  const Matrix& classifier_weight() const;
  const Matrix& classifier_bias() const;

  void set_trainable(const Trainability& trainable);
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  void zero_grad();

  std::size_t truncation_count() const { return truncations_.load(); }

  // --- traced passes for training --------------------------------------

  /// Padded token ids with CLS at position 0 and the matching mask.
  std::pair<std::vector<int>, Mask> prepare_ids(std::span<const int> token_ids,
                                                std::size_t padded_len) const;
  Matrix embed_ids(std::span<const int> ids_with_cls) const;
  void embedding_backward(std::span<const int> ids_with_cls, const Matrix& grad);

  StackTrace trace_layers(const Matrix& input, const Mask& mask, int from_layer,
                          int to_layer) const;
  /// Backpropagates `grad_output` through the traced layers and returns the
  /// gradient at the trace input. `inject` (if non-null) is added to the
  /// gradient flowing out of layer `inject_at`. Layers at or below
  /// `stop_layer` are skipped, in which case the returned gradient belongs to
  /// the output of layer max(from, stop_layer).
  Matrix backprop_layers(const StackTrace& trace, Matrix grad_output, int inject_at = -1,
                         const Matrix* inject = nullptr, int stop_layer = 0);

  RowVector head_forward(const Matrix& top, const Mask& mask, HeadTrace* trace) const;
  Matrix head_backward(const HeadTrace& trace, const RowVector& grad_z);
  /// Accumulates classifier gradients for logits restricted to the first
  /// grad_logits.size() classes and returns d z.
  RowVector classifier_backward(const RowVector& z, const RowVector& grad_logits);

 private:
  struct Layer {
    Parameter* ln1_gain;
    Parameter* ln1_bias;
    Parameter* wq;
    Parameter* bq;
    Parameter* wk;
    Parameter* bk;
    Parameter* wv;
    Parameter* bv;
    Parameter* wo;
    Parameter* bo;
    Parameter* ln2_gain;
    Parameter* ln2_bias;
    Parameter* w1;
    Parameter* b1;
    Parameter* w2;
    Parameter* b2;
  };

  void bind();
  Matrix layer_forward(int layer, const Matrix& x, const Mask& mask, LayerTrace* trace) const;
  Matrix layer_backward(int layer, const LayerTrace& trace, const Matrix& grad);

  EncoderConfig config_;
  std::vector<Parameter> params_;
  std::vector<Layer> layers_;
  Parameter* token_embedding_ = nullptr;
  Parameter* position_embedding_ = nullptr;
  Parameter* head_weight_ = nullptr;
  Parameter* head_bias_ = nullptr;
  Parameter* cls_weight_ = nullptr;
  Parameter* cls_bias_ = nullptr;
  mutable std::atomic<std::size_t> truncations_{0};
};

/// Writes a checkpoint: magic, manifest JSON (config, parameter names and
/// shapes, `extra`), then the raw little-endian doubles.
void save_checkpoint(const Encoder& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());

struct Checkpoint {
  Encoder model;
  nlohmann::json extra;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace slmm
