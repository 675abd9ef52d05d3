#include <doctest.h>

#include "helpers.hpp"
#include "slmm/error.hpp"
#include "slmm/run.hpp"

using namespace slmm;
using slmm::testing::TempDir;

TEST_CASE("run config round trips through json") {
  RunConfig cfg;
  cfg.data = "corpus.tsv";
  cfg.format = CorpusFormat::kJsonl;
  cfg.known_ratio = 0.75;
  cfg.seed = 42;
  cfg.encoder.num_layers = 3;
  cfg.encoder.hidden = 16;
  cfg.train_all_layers = true;
  cfg.train.xi = 0.2;
  cfg.train.disable_mm = true;
  cfg.threshold = 0.7;
  cfg.out = "out";
  const RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.encoder.hidden == 16);
  CHECK(back.train.disable_mm);
}

TEST_CASE("merging only touches given fields") {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.train.mu = 0.9;
  cfg.merge_json(nlohmann::json{{"seed", 5}, {"train", {{"xi", 0.1}}}});
  CHECK(cfg.seed == 5);
  CHECK(cfg.train.xi == 0.1);
  CHECK(cfg.train.mu == 0.9);
  CHECK_THROWS_AS(cfg.merge_json(nlohmann::json::array()), ConfigError);
  CHECK_THROWS_AS(cfg.merge_json(nlohmann::json{{"format", "xml"}}), ConfigError);
}

TEST_CASE("run config validation") {
  RunConfig cfg;
  cfg.known_ratio = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.threshold = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.train.mu = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("stage config follows the run seed") {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.train.seed = 1;
  CHECK(stage_config(cfg).seed == 9);
}

TEST_CASE("sweep parameters") {
  TrainConfig t;
  set_sweep_param(t, "xi", 0.4);
  set_sweep_param(t, "mu", 0.6);
  set_sweep_param(t, "alpha", 0.5);
  set_sweep_param(t, "n_mix", 2.0);
  CHECK(t.xi == 0.4);
  CHECK(t.mu == 0.6);
  CHECK(t.alpha == 0.5);
  CHECK(t.n_mix == 2);
  CHECK_THROWS_AS(set_sweep_param(t, "n", 1.5), ConfigError);
  CHECK_THROWS_AS(set_sweep_param(t, "lr", 0.1), ConfigError);
}

TEST_CASE("datasets load from a file or a partitioned directory") {
  TempDir dir("dataset");
  const Corpus full = generate_synthetic({.num_classes = 4, .samples_per_class = 10, .seed = 2});
  write_corpus(full, dir / "all.tsv", CorpusFormat::kTsv);
  RunConfig cfg;
  cfg.data = (dir / "all.tsv").string();
  const DatasetBundle from_file = load_dataset(cfg);
  CHECK(from_file.num_known() == 2);
  CHECK(from_file.train.size() + from_file.validation.size() < full.size());

  const PartitionedCorpus parts = partition_stratified(full, 0);
  std::filesystem::create_directories(dir / "bench");
  write_corpus(parts.train, dir / "bench" / "train.jsonl", CorpusFormat::kJsonl);
  write_corpus(parts.validation, dir / "bench" / "dev.jsonl", CorpusFormat::kJsonl);
  write_corpus(parts.test, dir / "bench" / "test.jsonl", CorpusFormat::kJsonl);
  cfg.data = (dir / "bench").string();
  cfg.format = CorpusFormat::kJsonl;
  const DatasetBundle from_dir = load_dataset(cfg);
  CHECK(from_dir.spec.intent_names.size() == 4);

  std::filesystem::remove(dir / "bench" / "dev.jsonl");
  CHECK_THROWS_AS(load_dataset(cfg), DataError);
  cfg.data = (dir / "nothing.tsv").string();
  CHECK_THROWS_AS(load_dataset(cfg), DataError);
  cfg.data.clear();
  CHECK_THROWS_AS(load_dataset(cfg), ConfigError);
}

TEST_CASE("staged output appears only on commit") {
  TempDir dir("staged");
  const auto target = dir / "out";
  {
    StagedOutput abandoned(target);
    abandoned.write_text("a.txt", "x");
  }
  CHECK_FALSE(std::filesystem::exists(target));
  CHECK(std::distance(std::filesystem::directory_iterator(dir.path()), {}) == 0);

  StagedOutput staged(target);
  staged.write_json("m.json", nlohmann::json{{"b", 1}, {"a", 2}});
  CHECK_FALSE(std::filesystem::exists(target / "m.json"));
  staged.commit();
  std::ifstream in(target / "m.json");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
}
