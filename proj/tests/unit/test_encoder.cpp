#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "slmm/encoder.hpp"
#include "slmm/error.hpp"
#include "slmm/mixup.hpp"
#include "slmm/softlabel.hpp"

using namespace slmm;
using slmm::testing::TempDir;
using slmm::testing::tiny_config;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Shifts every parameter away from its structured init so biases and gains
// take generic values.
void jitter(Encoder& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (Parameter* p : model.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += noise(rng);
  }
}

struct Probe {
  std::vector<std::vector<int>> seqs{{3, 4, 5, 6}, {7, 8}};
  std::vector<int> labels{1, 2};
  double xi = 0.3;
  double mu = 0.4;
  double lambda = 0.37;
  int n_mix = 1;
};

// mu * KL(soft labels) + (1 - mu) * open-class CE of one mixed pair, written
// out independently of the trainer. Fills parameter gradients when asked.
double probe_loss(Encoder& model, const Probe& pr, bool backward) {
  const int T = model.num_layers();
  const int width = model.num_known() + 1;
  std::size_t len = 0;
  for (const auto& s : pr.seqs) len = std::max(len, s.size());

  std::vector<std::vector<int>> ids(2);
  std::vector<StackTrace> stacks(2);
  std::vector<HeadTrace> heads(2);
  std::vector<RowVector> zs(2);
  Matrix logits(2, width);
  std::vector<SoftLabelDistribution> targets;
  for (int b = 0; b < 2; ++b) {
    auto [padded, mask] = model.prepare_ids(pr.seqs[b], len);
    stacks[b] = model.trace_layers(model.embed_ids(padded), mask, 0, T);
    zs[b] = model.head_forward(stacks[b].output, mask, &heads[b]);
    logits.row(b) = model.classify(zs[b], width);
    ids[b] = std::move(padded);
    targets.push_back(soften(pr.labels[b], model.num_known(), pr.xi));
  }
  const LossWithGrad kl = kl_loss(targets, logits);

  auto [state, mask] = interpolate_states(stacks[0].output_of(pr.n_mix), stacks[0].mask,
                                          stacks[1].output_of(pr.n_mix), stacks[1].mask, pr.lambda);
  StackTrace mix_stack = model.trace_layers(state, mask, pr.n_mix, T);
  HeadTrace mix_head;
  const RowVector mix_z = model.head_forward(mix_stack.output, mask, &mix_head);
  Matrix mix_logits(1, width);
  mix_logits.row(0) = model.classify(mix_z, width);
  const LossWithGrad mix = mixup_loss(mix_logits);

  const double loss = pr.mu * kl.value + (1.0 - pr.mu) * mix.value;
  if (!backward) return loss;

  model.zero_grad();
  const RowVector dz_mix = model.classifier_backward(mix_z, (1.0 - pr.mu) * mix.grad.row(0));
  const Matrix d_state = model.backprop_layers(mix_stack, model.head_backward(mix_head, dz_mix));
  for (int b = 0; b < 2; ++b) {
    const RowVector dz = model.classifier_backward(zs[b], pr.mu * kl.grad.row(b));
    const Matrix inject = (b == 0 ? pr.lambda : 1.0 - pr.lambda) * d_state;
    const Matrix d_in =
        model.backprop_layers(stacks[b], model.head_backward(heads[b], dz), pr.n_mix, &inject);
    model.embedding_backward(ids[b], d_in);
  }
  return loss;
}

}  // namespace

TEST_CASE("embed prepends CLS and truncates") {
  Encoder model(tiny_config());
  const std::vector<int> ids{3, 4, 5};
  const HiddenStates h = model.embed(ids);
  REQUIRE(h.batch() == 1);
  CHECK(h.values[0].rows() == 4);
  CHECK(h.values[0].cols() == 8);
  CHECK(h.masks[0] == Mask{1, 1, 1, 1});

  const std::vector<int> long_ids(25, 4);
  CHECK(model.truncation_count() == 0);
  CHECK(model.embed(long_ids).values[0].rows() == 11);
  CHECK(model.truncation_count() == 1);

  const HiddenStates batch = model.embed_batch({{3}, {3, 4, 5}});
  CHECK(batch.values[0].rows() == 4);
  CHECK(batch.masks[0] == Mask{1, 1, 0, 0});
}

TEST_CASE("token ids outside the vocabulary are rejected") {
  Encoder model(tiny_config(20));
  const std::vector<int> bad{3, 20};
  CHECK_THROWS_AS(model.embed(bad), ConfigError);
  const std::vector<int> negative{-1};
  CHECK_THROWS_AS(model.embed(negative), ConfigError);
  const std::vector<int> last{19};
  CHECK_NOTHROW(model.embed(last));
}

TEST_CASE("layer ranges compose exactly") {
  Encoder model(tiny_config());
  jitter(model, 1);
  const std::vector<int> ids{3, 9, 4, 12, 5};
  const HiddenStates h0 = model.embed(ids);
  const HiddenStates full = model.forward_layers(h0, 0, 2);
  const HiddenStates split = model.forward_layers(model.forward_layers(h0, 0, 1), 1, 2);
  CHECK(max_abs_diff(full.values[0], split.values[0]) == 0.0);
  CHECK(max_abs_diff(model.forward_layers(h0, 1, 1).values[0], h0.values[0]) == 0.0);
  CHECK_THROWS_AS(model.forward_layers(h0, 1, 3), ConfigError);
  CHECK_THROWS_AS(model.forward_layers(h0, 2, 1), ConfigError);

  const StackTrace trace = model.trace_layers(h0.values[0], h0.masks[0], 0, 2);
  CHECK(max_abs_diff(trace.output, full.values[0]) == 0.0);
  CHECK(max_abs_diff(trace.output_of(1), model.forward_layers(h0, 0, 1).values[0]) == 0.0);

  const RowVector z = model.represent(ids);
  CHECK(max_abs_diff(z, model.intent_head(mean_pool(full.values[0], full.masks[0]))) == 0.0);
  CHECK(max_abs_diff(model.logits(ids), model.classify(z, 4)) == 0.0);
}

TEST_CASE("padding does not change a sequence's representation") {
  Encoder model(tiny_config());
  jitter(model, 2);
  const std::vector<int> short_ids{3, 4};
  const HiddenStates batch = model.embed_batch({short_ids, {5, 6, 7, 8, 9, 10}});
  const HiddenStates top = model.forward_layers(batch, 0, 2);
  const RowVector padded = model.intent_head(mean_pool(top.values[0], top.masks[0]));
  CHECK(max_abs_diff(padded, model.represent(short_ids)) < 1e-12);
}

TEST_CASE("mean pooling skips masked rows") {
  Matrix h(3, 2);
  h << 1, 2, 3, 4, 100, 100;
  const RowVector pooled = mean_pool(h, Mask{1, 1, 0});
  CHECK(pooled[0] == 2.0);
  CHECK(pooled[1] == 3.0);
  CHECK(mean_pool(h, Mask{0, 0, 1})[0] == 100.0);
  CHECK_THROWS_AS(mean_pool(h, Mask{0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(mean_pool(h, Mask{1, 1}), ConfigError);
}

TEST_CASE("intent head is a ReLU layer") {
  Encoder model(tiny_config());
  jitter(model, 3);
  const RowVector pooled = RowVector::LinSpaced(8, -1.0, 1.0);
  const Matrix& w = model.parameter("head.weight").value;
  const Matrix& b = model.parameter("head.bias").value;
  const RowVector expect = (pooled * w + b).cwiseMax(0.0);
  CHECK(max_abs_diff(model.intent_head(pooled), expect) == 0.0);
  CHECK(model.intent_head(pooled).minCoeff() >= 0.0);
}

TEST_CASE("known classifier is the prefix of the open classifier") {
  Encoder model(tiny_config(20, 3));
  jitter(model, 4);
  const RowVector z = RowVector::LinSpaced(8, 0.0, 2.0);
  const RowVector k = model.classify(z, 3);
  const RowVector k1 = model.classify(z, 4);
  CHECK(max_abs_diff(k, k1.head(3)) == 0.0);
  CHECK(model.known_classifier_weight().rows() == 3);
  CHECK(max_abs_diff(model.known_classifier_weight(), model.classifier_weight().topRows(3)) == 0.0);
  CHECK(model.classifier_weight().rows() == 4);
  CHECK_THROWS_AS(model.classify(z, 2), ConfigError);
}

TEST_CASE("PAD and UNK embeddings start at zero") {
  Encoder model(tiny_config());
  const Matrix& emb = model.parameter("embedding.token").value;
  CHECK(emb.row(kPadId).cwiseAbs().maxCoeff() == 0.0);
  CHECK(emb.row(kUnkId).cwiseAbs().maxCoeff() == 0.0);
  CHECK(emb.row(kClsId).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("same seed gives the same weights") {
  Encoder a(tiny_config());
  Encoder b(tiny_config());
  auto cfg = tiny_config();
  cfg.seed = 8;
  Encoder c(cfg);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(max_abs_diff(pa[i]->value, pb[i]->value) == 0.0);
  CHECK(max_abs_diff(a.parameter("layer1.attn.wq").value, c.parameter("layer1.attn.wq").value) > 0.0);
}

TEST_CASE("analytic gradients match central differences") {
  Encoder model(tiny_config(20, 3));
  jitter(model, 5);
  const Probe probe;
  probe_loss(model, probe, true);
  const double h = 1e-4;
  for (Parameter* p : model.parameters()) {
    const Matrix analytic = p->grad;
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = probe_loss(model, probe, false);
      p->value.data()[i] = saved - h;
      const double down = probe_loss(model, probe, false);
      p->value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-6});
    INFO(p->name);
    CHECK((analytic - numeric).norm() / scale <= 1e-3);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir("ckpt");
  Encoder model(tiny_config());
  jitter(model, 6);
  const nlohmann::json extra{{"note", "x"}};
  save_checkpoint(model, dir / "m.ckpt", extra);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.extra == extra);
  const auto pa = std::as_const(model).parameters();
  const auto pb = back.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->trainable == pb[i]->trainable);
    CHECK(std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                      sizeof(double) * static_cast<std::size_t>(pa[i]->value.size())) == 0);
  }
  const std::vector<int> ids{3, 4, 5};
  CHECK(max_abs_diff(back.model.logits(ids), model.logits(ids)) == 0.0);
  CHECK(max_abs_diff(back.model.classify(back.model.represent(ids), 3), model.logits(ids).head(3)) == 0.0);

  slmm::testing::write_file(dir / "bad.ckpt", "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST_CASE("trainability groups") {
  Encoder model(tiny_config());
  model.set_trainable(Trainability::last_layer(2));
  CHECK_FALSE(model.parameter("embedding.token").trainable);
  CHECK_FALSE(model.parameter("layer1.attn.wq").trainable);
  CHECK(model.parameter("layer2.ffn.w2").trainable);
  CHECK(model.parameter("head.weight").trainable);
  CHECK(model.parameter("classifier.bias").trainable);
  model.set_trainable(Trainability::all(2));
  for (const Parameter* p : std::as_const(model).parameters()) CHECK(p->trainable);
  CHECK_THROWS_AS(model.set_trainable(Trainability{{3}, false, true, true}), ConfigError);
  CHECK_THROWS_AS(model.set_trainable(Trainability{{}, false, false, false}), ConfigError);
  CHECK_THROWS_AS(model.parameter("nope"), ConfigError);
}

TEST_CASE("encoder config validation") {
  auto cfg = tiny_config();
  cfg.num_layers = 1;
  cfg.trainable = Trainability::all(1);
  CHECK_THROWS_AS(Encoder{cfg}, ConfigError);
  cfg = tiny_config();
  cfg.num_heads = 3;
  CHECK_THROWS_AS(Encoder{cfg}, ConfigError);
  cfg = tiny_config();
  cfg.num_known = 0;
  CHECK_THROWS_AS(Encoder{cfg}, ConfigError);
  cfg = tiny_config();
  CHECK(EncoderConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}
