#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "helpers.hpp"
#include "slmm/data.hpp"
#include "slmm/error.hpp"

using namespace slmm;
using slmm::testing::TempDir;
using slmm::testing::write_file;

namespace {

Corpus toy_corpus(int classes, int per_class) {
  Corpus c;
  for (int k = 0; k < classes; ++k) c.intent_names.push_back("intent_" + std::string(1, char('a' + k)));
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      c.utterances.push_back({{"tok" + std::to_string(k), "shared"}, k + 1, ""});
    }
  }
  return c;
}

}  // namespace

TEST_CASE("tsv line loads as tokens and label") {
  TempDir dir("data");
  write_file(dir / "c.tsv", "Add this song to blues roots\tAddToPlaylist\nplay jazz\tPlayMusic\nmore\tAddToPlaylist\n");
  const Corpus c = load_corpus(dir / "c.tsv", CorpusFormat::kTsv);
  REQUIRE(c.size() == 3);
  CHECK(c.utterances[0].tokens == std::vector<std::string>{"add", "this", "song", "to", "blues", "roots"});
  CHECK(c.intent_names == std::vector<std::string>{"AddToPlaylist", "PlayMusic"});
  CHECK(c.utterances[0].label == 1);
  CHECK(c.utterances[1].label == 2);
  CHECK(c.utterances[2].label == 1);
}

TEST_CASE("one record gives one class") {
  TempDir dir("data");
  write_file(dir / "c.jsonl", R"({"text": "hello there", "label": "greet"})" "\n");
  const Corpus c = load_corpus(dir / "c.jsonl", CorpusFormat::kJsonl);
  CHECK(c.intent_names.size() == 1);
  CHECK(c.utterances.at(0).label == 1);
}

TEST_CASE("jsonl accepts numeric labels") {
  TempDir dir("data");
  write_file(dir / "c.jsonl", "{\"text\": \"a b\", \"label\": 7}\n{\"text\": \"c\", \"label\": 3}\n");
  const Corpus c = load_corpus(dir / "c.jsonl", CorpusFormat::kJsonl);
  CHECK(c.intent_names == std::vector<std::string>{"7", "3"});
}

TEST_CASE("load errors name the line") {
  TempDir dir("data");
  write_file(dir / "empty_text.tsv", "fine\tA\n   \tB\n");
  try {
    load_corpus(dir / "empty_text.tsv", CorpusFormat::kTsv);
    FAIL("expected a load error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  write_file(dir / "no_tab.tsv", "fine\tA\nbroken line\n");
  CHECK_THROWS_WITH_AS(load_corpus(dir / "no_tab.tsv", CorpusFormat::kTsv),
                       doctest::Contains(":2:"), DataError);
  write_file(dir / "bad.jsonl", "{\"text\": \"x\"}\n");
  CHECK_THROWS_WITH_AS(load_corpus(dir / "bad.jsonl", CorpusFormat::kJsonl),
                       doctest::Contains(":1:"), DataError);
  write_file(dir / "empty.tsv", "");
  CHECK_THROWS_AS(load_corpus(dir / "empty.tsv", CorpusFormat::kTsv), DataError);
  CHECK_THROWS_AS(load_corpus(dir / "missing.tsv", CorpusFormat::kTsv), DataError);
}

TEST_CASE("label keeps text with inner tabs") {
  TempDir dir("data");
  write_file(dir / "c.tsv", "a\tb c\tL\n");
  const Corpus c = load_corpus(dir / "c.tsv", CorpusFormat::kTsv);
  CHECK(c.utterances[0].tokens == std::vector<std::string>{"a", "b", "c"});
  CHECK(c.intent_names[0] == "L");
}

TEST_CASE("corpus round-trips through both formats") {
  TempDir dir("data");
  const Corpus c = generate_synthetic({.num_classes = 3, .samples_per_class = 5, .seed = 2});
  for (auto fmt : {CorpusFormat::kTsv, CorpusFormat::kJsonl}) {
    const auto path = dir / (std::string("c.") + std::string(format_name(fmt)));
    write_corpus(c, path, fmt);
    const Corpus back = load_corpus(path, fmt);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(back.utterances[i].tokens == c.utterances[i].tokens);
      CHECK(back.intent_names[back.utterances[i].label - 1] ==
            c.intent_names[c.utterances[i].label - 1]);
    }
  }
}

TEST_CASE("vocabulary thresholds and reserved ids") {
  Corpus c;
  c.intent_names = {"x"};
  c.utterances = {{{"song", "once"}, 1, ""}, {{"song"}, 1, ""}, {{"song", "twice"}, 1, ""},
                  {{"twice"}, 1, ""}};
  const Vocabulary v2 = Vocabulary::build(c, 2);
  CHECK(v2.id("song") >= kFirstTokenId);
  CHECK(v2.id("twice") >= kFirstTokenId);
  CHECK(v2.id("once") == kUnkId);
  CHECK(v2.id("never") == kUnkId);
  CHECK(Vocabulary::build(c, 5).id("once") == kUnkId);
  CHECK(v2.size() == kFirstTokenId + 2);

  const Vocabulary v1 = Vocabulary::build(c, 1);
  std::set<int> ids;
  for (const auto& tok : {"once", "song", "twice"}) ids.insert(v1.id(tok));
  CHECK(ids == std::set<int>{3, 4, 5});
  CHECK(v1 == Vocabulary::build(c, 1));
  CHECK(Vocabulary::from_json(v1.to_json()) == v1);
  CHECK_THROWS_AS(Vocabulary::build(c, 0), ConfigError);
}

TEST_CASE("known class count is the ceiling") {
  // brute force: the smallest k with k >= ratio * n, using exact integer arithmetic on percent ratios
  for (int n = 1; n <= 200; ++n) {
    for (int pct : {1, 10, 25, 33, 50, 75, 90, 100}) {
      int expect = 0;
      while (100 * expect < pct * n) ++expect;
      CHECK(known_class_count(pct / 100.0, n) == expect);
    }
  }
  CHECK(known_class_count(0.25, 150) == 38);
  CHECK_THROWS_AS(known_class_count(0.0, 10), ConfigError);
  CHECK_THROWS_AS(known_class_count(1.5, 10), ConfigError);
}

TEST_CASE("clinc-sized split maps every other label to K+1") {
  Corpus full = toy_corpus(150, 10);
  for (std::size_t k = 0; k < 150; ++k) full.intent_names[k] = "intent" + std::to_string(k);
  const DatasetBundle b = make_split(full, 0.25, 3);
  CHECK(b.num_known() == 38);
  CHECK(b.spec.open_label() == 39);
  std::set<int> test_labels;
  for (const auto& u : b.test.utterances) test_labels.insert(u.label);
  CHECK(test_labels.count(39) == 1);
  CHECK(*test_labels.rbegin() == 39);
  int open_ids = 0;
  for (std::size_t id = 1; id <= 150; ++id) open_ids += b.spec.remap(static_cast<int>(id)) == 39;
  CHECK(open_ids == 150 - 38);
}

TEST_CASE("split invariants") {
  const Corpus full = generate_synthetic({.num_classes = 8, .samples_per_class = 30, .seed = 1});
  for (double ratio : {0.25, 0.5, 0.75}) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
      const DatasetBundle b = make_split(full, ratio, seed);
      const int K = b.num_known();
      CHECK(K == known_class_count(ratio, 8));
      for (const auto& u : b.train.utterances) CHECK(u.label <= K);
      for (const auto& u : b.validation.utterances) CHECK(u.label <= K);
      CHECK(std::any_of(b.test.utterances.begin(), b.test.utterances.end(),
                        [&](const Utterance& u) { return u.label == K + 1; }));
      // label_map on known classes is a bijection onto 1..K
      std::set<int> image;
      for (int id : b.spec.known_classes) image.insert(b.spec.remap(id));
      CHECK(image.size() == static_cast<std::size_t>(K));
      CHECK(*image.begin() == 1);
      CHECK(*image.rbegin() == K);
      // vocabulary only from train
      std::set<std::string> train_tokens;
      for (const auto& u : b.train.utterances) train_tokens.insert(u.tokens.begin(), u.tokens.end());
      for (std::size_t i = kFirstTokenId; i < b.vocab.tokens().size(); ++i) {
        CHECK(train_tokens.count(b.vocab.tokens()[i]) == 1);
      }
      // deterministic
      const DatasetBundle again = make_split(full, ratio, seed);
      CHECK(again.spec.known_classes == b.spec.known_classes);
      CHECK(again.vocab == b.vocab);
      CHECK(again.spec.to_json().dump() == b.spec.to_json().dump());
    }
  }
}

TEST_CASE("ratio one has no open class") {
  const Corpus full = toy_corpus(3, 10);
  const DatasetBundle b = make_split(full, 1.0, 0);
  CHECK(b.num_known() == 3);
  for (const auto& u : b.test.utterances) CHECK(u.label <= 3);
}

TEST_CASE("split needs two classes and a known class") {
  CHECK_THROWS_AS(make_split(toy_corpus(1, 10), 1.0, 0), ConfigError);
}

TEST_CASE("stratified partition sizes") {
  const Corpus full = toy_corpus(3, 25);
  const PartitionedCorpus p = partition_stratified(full, 4);
  std::map<int, int> train, val, test;
  for (const auto& u : p.train.utterances) ++train[u.label];
  for (const auto& u : p.validation.utterances) ++val[u.label];
  for (const auto& u : p.test.utterances) ++test[u.label];
  for (int k = 1; k <= 3; ++k) {
    CHECK(val[k] == 2);
    CHECK(test[k] == 2);
    CHECK(train[k] == 21);
  }
}

TEST_CASE("split spec json round trip") {
  const Corpus full = toy_corpus(6, 10);
  const DatasetBundle b = make_split(full, 0.5, 9);
  const SplitSpec back = SplitSpec::from_json(b.spec.to_json());
  CHECK(back.known_classes == b.spec.known_classes);
  CHECK(back.label_map == b.spec.label_map);
  CHECK(back.num_known == b.spec.num_known);
  CHECK(back.seed == 9);
}

TEST_CASE("batches cover every item once") {
  const auto b = make_batches(10, 4, false, 0, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 4);
  CHECK(b[1].size() == 4);
  CHECK(b[2].size() == 2);
  CHECK(b[0] == Batch{0, 1, 2, 3});
  CHECK(b[2] == Batch{8, 9});

  const auto s1 = make_batches(37, 5, true, 11, 3);
  const auto s2 = make_batches(37, 5, true, 11, 3);
  CHECK(s1 == s2);
  CHECK(make_batches(37, 5, true, 11, 4) != s1);
  std::vector<std::size_t> all;
  for (const auto& batch : s1) all.insert(all.end(), batch.begin(), batch.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
  CHECK(all.size() == 37);
  CHECK_THROWS_AS(make_batches(3, 0, false, 0, 0), ConfigError);
}

TEST_CASE("synthetic corpus shape") {
  const Corpus c = generate_synthetic({.num_classes = 8, .samples_per_class = 100, .noise_rate = 0.1});
  CHECK(c.size() == 800);
  CHECK(c.num_classes() == 8);
  const Corpus clean = generate_synthetic({.num_classes = 4, .samples_per_class = 20, .noise_rate = 0.0});
  for (const auto& u : clean.utterances) {
    const std::string prefix = "c" + std::to_string(u.label - 1) + "w";
    for (const auto& t : u.tokens) CHECK(t.rfind(prefix, 0) == 0);
  }
}

TEST_CASE("nearest centroid oracle separates the synthetic corpus") {
  // bag-of-words centroids fitted on train, cosine nearest centroid on test
  const Corpus full = generate_synthetic({.num_classes = 8, .samples_per_class = 100, .noise_rate = 0.1});
  const PartitionedCorpus p = partition_stratified(full, 0);
  std::map<std::string, std::size_t> index;
  for (const auto& u : p.train.utterances) {
    for (const auto& t : u.tokens) index.try_emplace(t, index.size());
  }
  auto bow = [&](const Utterance& u) {
    std::vector<double> v(index.size(), 0.0);
    for (const auto& t : u.tokens) {
      auto it = index.find(t);
      if (it != index.end()) v[it->second] += 1.0;
    }
    return v;
  };
  std::vector<std::vector<double>> centroid(8, std::vector<double>(index.size(), 0.0));
  for (const auto& u : p.train.utterances) {
    const auto v = bow(u);
    for (std::size_t j = 0; j < v.size(); ++j) centroid[u.label - 1][j] += v[j];
  }
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      ab += a[j] * b[j];
      aa += a[j] * a[j];
      bb += b[j] * b[j];
    }
    return ab / std::sqrt(aa * bb + 1e-300);
  };
  int correct = 0;
  for (const auto& u : p.test.utterances) {
    const auto v = bow(u);
    int best = 0;
    for (int k = 1; k < 8; ++k) {
      if (cosine(v, centroid[k]) > cosine(v, centroid[best])) best = k;
    }
    correct += best + 1 == u.label;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(p.test.size()) >= 0.99);
}

TEST_CASE("tokenize lowercases and splits on whitespace") {
  CHECK(tokenize("  Hello\tWORLD \n x ") == std::vector<std::string>{"hello", "world", "x"});
  CHECK(tokenize("   ").empty());
  CHECK(parse_format("jsonl") == CorpusFormat::kJsonl);
  CHECK_THROWS_AS(parse_format("csv"), ConfigError);
}
