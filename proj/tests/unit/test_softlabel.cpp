#include <doctest.h>

#include <cmath>
#include <random>

#include "slmm/error.hpp"
#include "slmm/softlabel.hpp"

using namespace slmm;

namespace {

Matrix row_of(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Eigen::Index>(values.size()));
  Eigen::Index c = 0;
  for (double v : values) m(0, c++) = v;
  return m;
}

}  // namespace

TEST_CASE("soften examples") {
  CHECK(soften(2, 3, 0.3).probs == std::vector<double>{0.0, 0.7, 0.0, 0.3});
  CHECK(soften(1, 1, 0.3).probs == std::vector<double>{0.7, 0.3});
  CHECK(soften(3, 4, 0.0).probs == std::vector<double>{0.0, 0.0, 1.0, 0.0, 0.0});
  CHECK_THROWS_AS(soften(4, 3, 0.3), ConfigError);
  CHECK_THROWS_AS(soften(0, 3, 0.3), ConfigError);
  CHECK_THROWS_AS(soften(1, 3, -0.1), ConfigError);
  CHECK_THROWS_AS(soften(1, 3, 1.0), ConfigError);
  CHECK_NOTHROW(soften(1, 3, 0.6));
  CHECK(soft_label_mass_warning(0.5));
  CHECK_FALSE(soft_label_mass_warning(0.49));
}

TEST_CASE("soften invariants on random inputs") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> pick_k(1, 20);
  std::uniform_real_distribution<double> pick_xi(0.0, 0.49);
  for (int trial = 0; trial < 2000; ++trial) {
    const int K = pick_k(rng);
    const int gold = std::uniform_int_distribution<int>(1, K)(rng);
    const double xi = pick_xi(rng);
    const auto d = soften(gold, K, xi);
    REQUIRE(d.probs.size() == static_cast<std::size_t>(K + 1));
    double sum = 0.0;
    for (double p : d.probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(d.probs[static_cast<std::size_t>(gold - 1)] == 1.0 - xi);
    CHECK(d.probs.back() == xi);
    for (int c = 1; c <= K; ++c) {
      if (c != gold) CHECK(d.probs[static_cast<std::size_t>(c - 1)] == 0.0);
    }
  }
}

TEST_CASE("kl closed form") {
  const std::vector<SoftLabelDistribution> p{{{0.7, 0.3}, 0.3}};
  const double expect = 0.7 * std::log(0.7 / 0.5) + 0.3 * std::log(0.3 / 0.5);
  CHECK(std::abs(kl_loss(p, row_of({0.0, 0.0})).value - expect) < 1e-12);
  CHECK(kl_loss(p, row_of({0.0, 0.0})).value == doctest::Approx(0.08228).epsilon(1e-4));
}

TEST_CASE("kl is zero at the target and positive elsewhere") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> gauss(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 1 + trial % 6;
    const int gold = 1 + trial % K;
    const double xi = 0.05 + 0.4 * (trial % 9) / 8.0;
    const std::vector<SoftLabelDistribution> p{soften(gold, K, xi)};
    // logits whose softmax is p on its support; zero-mass classes get a very low logit
    Matrix exact(1, K + 1);
    for (int c = 0; c <= K; ++c) {
      const double pc = p[0].probs[static_cast<std::size_t>(c)];
      exact(0, c) = pc > 0.0 ? std::log(pc) : -1e3;
    }
    CHECK(std::abs(kl_loss(p, exact).value) <= 1e-9);
    Matrix random(1, K + 1);
    for (int c = 0; c <= K; ++c) random(0, c) = gauss(rng);
    CHECK(kl_loss(p, random).value >= 0.0);
  }
}

TEST_CASE("kl with xi zero equals cross entropy") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + trial % 5;
    Matrix logits(4, K + 1);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
    std::vector<SoftLabelDistribution> p;
    std::vector<int> idx;
    for (int b = 0; b < 4; ++b) {
      const int gold = 1 + (b + trial) % K;
      p.push_back(soften(gold, K, 0.0));
      idx.push_back(gold - 1);
    }
    const auto kl = kl_loss(p, logits);
    const auto ce = cross_entropy(idx, logits);
    CHECK(std::abs(kl.value - ce.value) <= 1e-9);
    CHECK((kl.grad - ce.grad).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("kl gradient matches central differences") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> gauss(0.0, 1.5);
  const std::vector<SoftLabelDistribution> p{soften(1, 3, 0.3), soften(3, 3, 0.2), soften(2, 3, 0.0)};
  Matrix logits(3, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = gauss(rng);
  const auto analytic = kl_loss(p, logits).grad;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Matrix up = logits;
    Matrix down = logits;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double numeric = (kl_loss(p, up).value - kl_loss(p, down).value) / (2.0 * h);
    CHECK(std::abs(numeric - analytic.data()[i]) <= 1e-5);
  }
}

TEST_CASE("loss inputs are checked") {
  const std::vector<SoftLabelDistribution> p{soften(1, 2, 0.3)};
  CHECK_THROWS_AS(kl_loss(p, row_of({0.0, 0.0})), ConfigError);
  CHECK_THROWS_AS(kl_loss(p, row_of({0.0, std::nan(""), 0.0})), TrainingError);
  const std::vector<int> t{3};
  CHECK_THROWS_AS(cross_entropy(t, row_of({0.0, 0.0, 0.0})), ConfigError);
}
