#include "slmm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "slmm/data.hpp"
#include "slmm/error.hpp"
#include "slmm/rng.hpp"

namespace slmm {

namespace {

constexpr int kParamsPerLayer = 16;

Matrix add_bias(Matrix m, const Matrix& bias) {
  m.rowwise() += bias.row(0);
  return m;
}

}  // namespace

// --- configuration ------------------------------------------------------------

Trainability Trainability::all(int num_layers) {
  Trainability t;
  for (int l = 1; l <= num_layers; ++l) t.layers.push_back(l);
  t.embeddings = true;
  return t;
}

Trainability Trainability::last_layer(int num_layers) {
  Trainability t;
  t.layers = {num_layers};
  return t;
}

bool Trainability::layer(int index) const {
  return std::find(layers.begin(), layers.end(), index) != layers.end();
}

void EncoderConfig::validate() const {
  if (num_layers < 2) throw ConfigError("encoder needs at least 2 layers so that 1 <= n_mix < T");
  if (hidden < 1 || intent_dim < 1 || ffn_dim < 1 || max_len < 1) {
    throw ConfigError("encoder widths and max_len must be positive");
  }
  if (num_heads < 1 || hidden % num_heads != 0) {
    throw ConfigError("hidden width must be divisible by num_heads");
  }
  if (vocab_size <= kFirstTokenId - 1) throw ConfigError("vocab_size must cover the reserved ids");
  if (num_known < 1) throw ConfigError("num_known must be >= 1");
  for (int l : trainable.layers) {
    if (l < 1 || l > num_layers) throw ConfigError("trainable layer index out of range");
  }
  if (trainable.empty()) throw ConfigError("no trainable parameters selected");
}

nlohmann::json EncoderConfig::to_json() const {
  return nlohmann::json{{"num_layers", num_layers},
                        {"hidden", hidden},
                        {"intent_dim", intent_dim},
                        {"num_heads", num_heads},
                        {"ffn_dim", ffn_dim},
                        {"max_len", max_len},
                        {"vocab_size", vocab_size},
                        {"num_known", num_known},
                        {"init_std", init_std},
                        {"seed", seed},
                        {"trainable_layers", trainable.layers},
                        {"train_embeddings", trainable.embeddings},
                        {"train_head", trainable.head},
                        {"train_classifier", trainable.classifier}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& doc) {
  EncoderConfig c;
  c.num_layers = doc.at("num_layers").get<int>();
  c.hidden = doc.at("hidden").get<int>();
  c.intent_dim = doc.at("intent_dim").get<int>();
  c.num_heads = doc.at("num_heads").get<int>();
  c.ffn_dim = doc.at("ffn_dim").get<int>();
  c.max_len = doc.at("max_len").get<int>();
  c.vocab_size = doc.at("vocab_size").get<int>();
  c.num_known = doc.at("num_known").get<int>();
  c.init_std = doc.value("init_std", 0.02);
  c.seed = doc.value("seed", std::uint64_t{0});
  c.trainable.layers = doc.at("trainable_layers").get<std::vector<int>>();
  c.trainable.embeddings = doc.at("train_embeddings").get<bool>();
  c.trainable.head = doc.at("train_head").get<bool>();
  c.trainable.classifier = doc.at("train_classifier").get<bool>();
  return c;
}

// --- pooling --------------------------------------------------------------

RowVector mean_pool(const Matrix& h, const Mask& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != h.rows()) {
    throw ConfigError("mask length does not match the hidden states");
  }
  RowVector sum = RowVector::Zero(h.cols());
  int count = 0;
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    if (mask[static_cast<std::size_t>(r)] == 0) continue;
    sum += h.row(r);
    ++count;
  }
  if (count == 0) throw ConfigError("mean_pool needs at least one unmasked position");
  return sum / static_cast<double>(count);
}

const Matrix& StackTrace::output_of(int index) const {
  const int offset = index - from;
  if (offset < 0 || offset > static_cast<int>(layers.size())) {
    throw ConfigError("layer index outside the traced range");
  }
  if (offset == static_cast<int>(layers.size())) return output;
  return layers[static_cast<std::size_t>(offset)].input;
}

// --- construction ---------------------------------------------------------

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  const int H = config_.hidden;
  auto rng = make_rng(config_.seed, "encoder.init");
  std::normal_distribution<double> gauss(0.0, config_.init_std);
  auto gaussian = [&](std::string name, int rows, int cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    params_.push_back({std::move(name), std::move(m), Matrix::Zero(rows, cols), true});
  };
  auto constant = [&](std::string name, int rows, int cols, double value) {
    params_.push_back({std::move(name), Matrix::Constant(rows, cols, value), Matrix::Zero(rows, cols), true});
  };

  params_.reserve(static_cast<std::size_t>(2 + kParamsPerLayer * config_.num_layers + 4));
  gaussian("embedding.token", config_.vocab_size, H);
  // PAD and UNK start as "no evidence"; UNK never occurs in training text
  params_.back().value.row(kPadId).setZero();
  params_.back().value.row(kUnkId).setZero();
  gaussian("embedding.position", config_.max_len + 1, H);
  for (int l = 1; l <= config_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    constant(p + "ln1.gain", 1, H, 1.0);
    constant(p + "ln1.bias", 1, H, 0.0);
    gaussian(p + "attn.wq", H, H);
    constant(p + "attn.bq", 1, H, 0.0);
    gaussian(p + "attn.wk", H, H);
    constant(p + "attn.bk", 1, H, 0.0);
    gaussian(p + "attn.wv", H, H);
    constant(p + "attn.bv", 1, H, 0.0);
    gaussian(p + "attn.wo", H, H);
    constant(p + "attn.bo", 1, H, 0.0);
    constant(p + "ln2.gain", 1, H, 1.0);
    constant(p + "ln2.bias", 1, H, 0.0);
    gaussian(p + "ffn.w1", H, config_.ffn_dim);
    constant(p + "ffn.b1", 1, config_.ffn_dim, 0.0);
    gaussian(p + "ffn.w2", config_.ffn_dim, H);
    constant(p + "ffn.b2", 1, H, 0.0);
  }
  gaussian("head.weight", H, config_.intent_dim);
  constant("head.bias", 1, config_.intent_dim, 0.0);
  gaussian("classifier.weight", config_.num_known + 1, config_.intent_dim);
  constant("classifier.bias", 1, config_.num_known + 1, 0.0);
  bind();
  set_trainable(config_.trainable);
}

Encoder::Encoder(const Encoder& other)
    : config_(other.config_), params_(other.params_), truncations_(other.truncations_.load()) {
  bind();
}

Encoder& Encoder::operator=(const Encoder& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    truncations_ = other.truncations_.load();
    bind();
  }
  return *this;
}

Encoder::Encoder(Encoder&& other) noexcept
    : config_(std::move(other.config_)),
      params_(std::move(other.params_)),
      truncations_(other.truncations_.load()) {
  bind();
}

Encoder& Encoder::operator=(Encoder&& other) noexcept {
  config_ = std::move(other.config_);
  params_ = std::move(other.params_);
  truncations_ = other.truncations_.load();
  bind();
  return *this;
}

Encoder::~Encoder() = default;

void Encoder::bind() {
  layers_.clear();
  if (params_.empty()) return;
  token_embedding_ = &params_[0];
  position_embedding_ = &params_[1];
  std::size_t idx = 2;
  for (int l = 0; l < config_.num_layers; ++l) {
    Parameter* p = &params_[idx];
    layers_.push_back({p, p + 1, p + 2, p + 3, p + 4, p + 5, p + 6, p + 7, p + 8, p + 9, p + 10,
                       p + 11, p + 12, p + 13, p + 14, p + 15});
    idx += kParamsPerLayer;
  }
  head_weight_ = &params_[idx];
  head_bias_ = &params_[idx + 1];
  cls_weight_ = &params_[idx + 2];
  cls_bias_ = &params_[idx + 3];
}

void Encoder::set_trainable(const Trainability& trainable) {
  if (trainable.empty()) throw ConfigError("no trainable parameters selected");
  for (int l : trainable.layers) {
    if (l < 1 || l > config_.num_layers) throw ConfigError("trainable layer index out of range");
  }
  config_.trainable = trainable;
  token_embedding_->trainable = trainable.embeddings;
  position_embedding_->trainable = trainable.embeddings;
  for (int l = 1; l <= config_.num_layers; ++l) {
    const bool on = trainable.layer(l);
    Parameter* first = layers_[static_cast<std::size_t>(l - 1)].ln1_gain;
    for (int i = 0; i < kParamsPerLayer; ++i) first[i].trainable = on;
  }
  head_weight_->trainable = trainable.head;
  head_bias_->trainable = trainable.head;
  cls_weight_->trainable = trainable.classifier;
  cls_bias_->trainable = trainable.classifier;
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> Encoder::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

Parameter& Encoder::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& Encoder::parameter(std::string_view name) const {
  return const_cast<Encoder*>(this)->parameter(name);
}

void Encoder::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

// --- forward --------------------------------------------------------------

std::pair<std::vector<int>, Mask> Encoder::prepare_ids(std::span<const int> token_ids,
                                                       std::size_t padded_len) const {
  std::size_t len = token_ids.size();
  const auto max_len = static_cast<std::size_t>(config_.max_len);
  if (len > max_len) {
    ++truncations_;
    len = max_len;
  }
  padded_len = std::min(std::max(padded_len, len), max_len);
  std::vector<int> ids(padded_len + 1, kPadId);
  Mask mask(padded_len + 1, 0);
  ids[0] = kClsId;
  mask[0] = 1;
  for (std::size_t i = 0; i < len; ++i) {
    const int id = token_ids[i];
    if (id < 0 || id >= config_.vocab_size) {
      throw ConfigError("token id " + std::to_string(id) + " outside the vocabulary");
    }
    ids[i + 1] = id;
    mask[i + 1] = 1;
  }
  return {std::move(ids), std::move(mask)};
}

Matrix Encoder::embed_ids(std::span<const int> ids_with_cls) const {
  const auto rows = static_cast<Eigen::Index>(ids_with_cls.size());
  Matrix x(rows, config_.hidden);
  for (Eigen::Index p = 0; p < rows; ++p) {
    x.row(p) = token_embedding_->value.row(ids_with_cls[static_cast<std::size_t>(p)]) +
               position_embedding_->value.row(p);
  }
  return x;
}

HiddenStates Encoder::embed(std::span<const int> token_ids) const {
  auto [ids, mask] = prepare_ids(token_ids, 0);
  HiddenStates h;
  h.values.push_back(embed_ids(ids));
  h.masks.push_back(std::move(mask));
  return h;
}

HiddenStates Encoder::embed_batch(const std::vector<std::vector<int>>& sequences) const {
  std::size_t longest = 0;
  for (const auto& s : sequences) longest = std::max(longest, s.size());
  HiddenStates h;
  for (const auto& s : sequences) {
    auto [ids, mask] = prepare_ids(s, longest);
    h.values.push_back(embed_ids(ids));
    h.masks.push_back(std::move(mask));
  }
  return h;
}

Matrix Encoder::layer_forward(int layer, const Matrix& x, const Mask& mask,
                              LayerTrace* trace) const {
  const Layer& w = layers_[static_cast<std::size_t>(layer - 1)];
  const int heads = config_.num_heads;
  const int head_dim = config_.hidden / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Eigen::Index len = x.rows();

  Matrix ln1_hat;
  Eigen::VectorXd ln1_rstd;
  Matrix normed1 = layer_norm(x, w.ln1_gain->value, w.ln1_bias->value, &ln1_hat, &ln1_rstd);
  Matrix q = add_bias(normed1 * w.wq->value, w.bq->value);
  Matrix k = add_bias(normed1 * w.wk->value, w.bk->value);
  Matrix v = add_bias(normed1 * w.wv->value, w.bv->value);

  Matrix context(len, config_.hidden);
  std::vector<Matrix> attn;
  if (trace != nullptr) attn.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * head_dim;
    Matrix scores = q.middleCols(c0, head_dim) * k.middleCols(c0, head_dim).transpose() * scale;
    for (Eigen::Index j = 0; j < len; ++j) {
      if (mask[static_cast<std::size_t>(j)] == 0) {
        scores.col(j).setConstant(-std::numeric_limits<double>::infinity());
      }
    }
    for (Eigen::Index i = 0; i < len; ++i) {
      const double shift = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - shift).exp();
      // Eigen's vectorised exp clamps -inf to a subnormal instead of 0
      for (Eigen::Index j = 0; j < len; ++j) {
        if (mask[static_cast<std::size_t>(j)] == 0) scores(i, j) = 0.0;
      }
      scores.row(i) /= scores.row(i).sum();
    }
    context.middleCols(c0, head_dim) = scores * v.middleCols(c0, head_dim);
    if (trace != nullptr) attn.push_back(std::move(scores));
  }
  Matrix mid = x + add_bias(context * w.wo->value, w.bo->value);

  Matrix ln2_hat;
  Eigen::VectorXd ln2_rstd;
  Matrix normed2 = layer_norm(mid, w.ln2_gain->value, w.ln2_bias->value, &ln2_hat, &ln2_rstd);
  Matrix ffn_pre = add_bias(normed2 * w.w1->value, w.b1->value);
  Matrix ffn_act = gelu(ffn_pre);
  Matrix out = mid + add_bias(ffn_act * w.w2->value, w.b2->value);

  if (trace != nullptr) {
    trace->input = x;
    trace->ln1_hat = std::move(ln1_hat);
    trace->ln1_rstd = std::move(ln1_rstd);
    trace->normed1 = std::move(normed1);
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->attn = std::move(attn);
    trace->context = std::move(context);
    trace->mid = std::move(mid);
    trace->ln2_hat = std::move(ln2_hat);
    trace->ln2_rstd = std::move(ln2_rstd);
    trace->normed2 = std::move(normed2);
    trace->ffn_pre = std::move(ffn_pre);
    trace->ffn_act = std::move(ffn_act);
  }
  return out;
}

HiddenStates Encoder::forward_layers(const HiddenStates& h, int from_layer, int to_layer) const {
  if (from_layer < 0 || from_layer > to_layer || to_layer > config_.num_layers) {
    throw ConfigError("forward_layers range (" + std::to_string(from_layer) + ", " +
                      std::to_string(to_layer) + "] is invalid");
  }
  HiddenStates out = h;
  for (std::size_t b = 0; b < out.batch(); ++b) {
    for (int l = from_layer + 1; l <= to_layer; ++l) {
      out.values[b] = layer_forward(l, out.values[b], out.masks[b], nullptr);
    }
  }
  return out;
}

RowVector Encoder::intent_head(const RowVector& pooled) const {
  RowVector pre = pooled * head_weight_->value + head_bias_->value.row(0);
  return pre.cwiseMax(0.0);
}

RowVector Encoder::classify(const RowVector& z, int num_classes) const {
  if (num_classes != config_.num_known && num_classes != config_.num_known + 1) {
    throw ConfigError("classify expects K or K+1 classes");
  }
  return z * cls_weight_->value.topRows(num_classes).transpose() +
         cls_bias_->value.row(0).head(num_classes);
}

RowVector Encoder::represent(std::span<const int> token_ids) const {
  const HiddenStates top = forward_layers(embed(token_ids), 0, config_.num_layers);
  return intent_head(mean_pool(top.values[0], top.masks[0]));
}

RowVector Encoder::logits(std::span<const int> token_ids) const {
  return classify(represent(token_ids), config_.num_known + 1);
}

Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> Encoder::known_classifier_weight() const {
  const Matrix& w = cls_weight_->value;
  return w.topRows(config_.num_known);
}

const Matrix& Encoder::classifier_weight() const { return cls_weight_->value; }
const Matrix& Encoder::classifier_bias() const { return cls_bias_->value; }

// --- traced passes --------------------------------------------------------

StackTrace Encoder::trace_layers(const Matrix& input, const Mask& mask, int from_layer,
                                 int to_layer) const {
  if (from_layer < 0 || from_layer > to_layer || to_layer > config_.num_layers) {
    throw ConfigError("trace_layers range is invalid");
  }
  StackTrace trace;
  trace.from = from_layer;
  trace.mask = mask;
  trace.layers.resize(static_cast<std::size_t>(to_layer - from_layer));
  Matrix x = input;
  for (int l = from_layer + 1; l <= to_layer; ++l) {
    x = layer_forward(l, x, mask, &trace.layers[static_cast<std::size_t>(l - from_layer - 1)]);
  }
  trace.output = std::move(x);
  return trace;
}

Matrix Encoder::layer_backward(int layer, const LayerTrace& t, const Matrix& grad) {
  const Layer& w = layers_[static_cast<std::size_t>(layer - 1)];
  const int heads = config_.num_heads;
  const int head_dim = config_.hidden / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  // feed-forward branch
  Matrix d_mid = grad;
  w.w2->grad.noalias() += t.ffn_act.transpose() * grad;
  w.b2->grad.row(0) += grad.colwise().sum();
  Matrix d_pre = ((grad * w.w2->value.transpose()).array() * gelu_grad(t.ffn_pre).array()).matrix();
  w.w1->grad.noalias() += t.normed2.transpose() * d_pre;
  w.b1->grad.row(0) += d_pre.colwise().sum();
  const Matrix d_normed2 = d_pre * w.w1->value.transpose();
  d_mid += layer_norm_backward(d_normed2, t.ln2_hat, t.ln2_rstd, w.ln2_gain->value,
                               w.ln2_gain->grad, w.ln2_bias->grad);

  // attention branch
  Matrix d_x = d_mid;
  w.wo->grad.noalias() += t.context.transpose() * d_mid;
  w.bo->grad.row(0) += d_mid.colwise().sum();
  const Matrix d_context = d_mid * w.wo->value.transpose();
  Matrix d_q(t.q.rows(), t.q.cols());
  Matrix d_k(t.k.rows(), t.k.cols());
  Matrix d_v(t.v.rows(), t.v.cols());
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * head_dim;
    const Matrix& probs = t.attn[static_cast<std::size_t>(h)];
    const auto d_ctx_h = d_context.middleCols(c0, head_dim);
    d_v.middleCols(c0, head_dim) = probs.transpose() * d_ctx_h;
    Matrix d_probs = d_ctx_h * t.v.middleCols(c0, head_dim).transpose();
    const Eigen::VectorXd row_dot = (d_probs.array() * probs.array()).rowwise().sum();
    Matrix d_scores = (probs.array() * (d_probs.colwise() - row_dot).array()).matrix();
    d_scores *= scale;
    d_q.middleCols(c0, head_dim) = d_scores * t.k.middleCols(c0, head_dim);
    d_k.middleCols(c0, head_dim) = d_scores.transpose() * t.q.middleCols(c0, head_dim);
  }
  w.wq->grad.noalias() += t.normed1.transpose() * d_q;
  w.bq->grad.row(0) += d_q.colwise().sum();
  w.wk->grad.noalias() += t.normed1.transpose() * d_k;
  w.bk->grad.row(0) += d_k.colwise().sum();
  w.wv->grad.noalias() += t.normed1.transpose() * d_v;
  w.bv->grad.row(0) += d_v.colwise().sum();
  const Matrix d_normed1 = d_q * w.wq->value.transpose() + d_k * w.wk->value.transpose() +
                           d_v * w.wv->value.transpose();
  d_x += layer_norm_backward(d_normed1, t.ln1_hat, t.ln1_rstd, w.ln1_gain->value,
                             w.ln1_gain->grad, w.ln1_bias->grad);
  return d_x;
}

Matrix Encoder::backprop_layers(const StackTrace& trace, Matrix grad_output, int inject_at,
                                const Matrix* inject, int stop_layer) {
  const int to = trace.from + static_cast<int>(trace.layers.size());
  if (inject != nullptr && inject_at == to) grad_output += *inject;
  for (int l = to; l > std::max(trace.from, stop_layer); --l) {
    grad_output = layer_backward(l, trace.layers[static_cast<std::size_t>(l - trace.from - 1)], grad_output);
    if (inject != nullptr && inject_at == l - 1) grad_output += *inject;
  }
  return grad_output;
}

void Encoder::embedding_backward(std::span<const int> ids_with_cls, const Matrix& grad) {
  for (Eigen::Index p = 0; p < grad.rows(); ++p) {
    token_embedding_->grad.row(ids_with_cls[static_cast<std::size_t>(p)]) += grad.row(p);
    position_embedding_->grad.row(p) += grad.row(p);
  }
}

RowVector Encoder::head_forward(const Matrix& top, const Mask& mask, HeadTrace* trace) const {
  RowVector pooled = mean_pool(top, mask);
  RowVector pre = pooled * head_weight_->value + head_bias_->value.row(0);
  RowVector z = pre.cwiseMax(0.0);
  if (trace != nullptr) {
    trace->mask = mask;
    trace->rows = top.rows();
    trace->pooled = std::move(pooled);
    trace->pre = std::move(pre);
    trace->z = z;
  }
  return z;
}

Matrix Encoder::head_backward(const HeadTrace& trace, const RowVector& grad_z) {
  const RowVector d_pre = (grad_z.array() * (trace.pre.array() > 0.0).cast<double>()).matrix();
  head_weight_->grad.noalias() += trace.pooled.transpose() * d_pre;
  head_bias_->grad.row(0) += d_pre;
  const RowVector d_pooled = d_pre * head_weight_->value.transpose();
  int count = 0;
  for (auto m : trace.mask) count += m != 0 ? 1 : 0;
  Matrix d_top = Matrix::Zero(trace.rows, config_.hidden);
  for (Eigen::Index r = 0; r < trace.rows; ++r) {
    if (trace.mask[static_cast<std::size_t>(r)] != 0) d_top.row(r) = d_pooled / count;
  }
  return d_top;
}

RowVector Encoder::classifier_backward(const RowVector& z, const RowVector& grad_logits) {
  const Eigen::Index classes = grad_logits.size();
  cls_weight_->grad.topRows(classes).noalias() += grad_logits.transpose() * z;
  cls_bias_->grad.row(0).head(classes) += grad_logits;
  return grad_logits * cls_weight_->value.topRows(classes);
}

}  // namespace slmm
