#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvqa/dataset.hpp"
#include "cvqa/errors.hpp"
#include "cvqa/synth.hpp"
#include "fixture.hpp"

using namespace cvqa;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("cvqa_test_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("answer tokenization drops stopwords and duplicates") {
  CHECK(tokenize_answer("red and yellow") == std::vector<std::string>{"red", "yellow"});
  CHECK(tokenize_answer("cutting pizza") == std::vector<std::string>{"cutting", "pizza"});
  CHECK(tokenize_answer("is") == std::vector<std::string>{});
  CHECK(tokenize_answer("black & white") == std::vector<std::string>{"black", "white"});
  CHECK(tokenize_answer("Stop, Stop!") == std::vector<std::string>{"stop"});
  CHECK_THROWS_AS(tokenize_answer(""), UsageError);
}

TEST_CASE("soft labels saturate at three annotators") {
  CHECK(soft_label(0) == 0.0);
  CHECK(soft_label(1) == doctest::Approx(1.0 / 3.0));
  CHECK(soft_label(3) == 1.0);
  CHECK(soft_label(10) == 1.0);
  double prev = -1.0;
  for (int count = 0; count <= 10; ++count) {
    CHECK(soft_label(count) >= prev);
    prev = soft_label(count);
  }
}

TEST_CASE("threshold boundaries: 40 is base, 39 novel, 9 excluded") {
  std::vector<AnnotationRecord> train;
  auto repeat = [&](const std::string& answer, int times) {
    for (int i = 0; i < times; ++i) {
      AnnotationRecord record;
      record.question_id = static_cast<int64_t>(train.size() + 1);
      record.answers = {{answer, 10}};
      train.push_back(record);
    }
  };
  repeat("red horse", 40);   // exactly at the base threshold
  repeat("red dog", 39);     // one below: novel, attributes covered by base
  repeat("horse", 41);       // covers "horse"; "red" and "dog"...
  repeat("red cat", 45);     // covers "red" and "cat"
  repeat("dog", 12);         // novel (single attribute, covered? "dog" not in base)
  repeat("blue bird", 9);    // below novel_low

  auto manifest = build_splits(train, {});
  const auto& vocab = manifest.vocab;
  CHECK(vocab.base_index.count("red horse"));
  CHECK(vocab.base_index.count("horse"));
  CHECK(vocab.base_index.count("red cat"));
  CHECK(!vocab.base_index.count("red dog"));
  CHECK(vocab.novel_index.count("red dog") == 0);  // "dog" is not a base attribute
  CHECK(vocab.novel_index.count("dog") == 0);
  CHECK(!vocab.novel_index.count("blue bird"));
  CHECK(!vocab.base_index.count("blue bird"));
}

TEST_CASE("fixture splits match the golden manifest") {
  const std::string train_path = temp_path("fixture_train.json");
  const std::string val_path = temp_path("fixture_val.json");
  write_file(train_path, cvqa_test::fixture_to_json(cvqa_test::fixture_train_records()));
  write_file(val_path, cvqa_test::fixture_to_json(cvqa_test::fixture_val_records()));

  auto train = parse_vqa_annotations(train_path);
  auto val = parse_vqa_annotations(val_path);
  CHECK(train.size() == 200);
  auto manifest = build_splits(train, val);

  CHECK(manifest.vocab.base == std::vector<std::string>{"is", "red car", "cutting paper",
                                                        "pizza", "elephant", "riding horse"});
  CHECK(manifest.vocab.novel == std::vector<std::string>{"riding elephant", "cutting pizza"});
  CHECK(manifest.vocab.attributes ==
        std::vector<std::string>{"car", "cutting", "elephant", "horse", "paper", "pizza", "red",
                                 "riding"});

  auto golden = SplitManifest::from_json(read_file(std::string(CVQA_TEST_DATA_DIR) +
                                                   "/splits_fixture_expected.json"));
  CHECK(manifest.vocab.base == golden.vocab.base);
  CHECK(manifest.vocab.novel == golden.vocab.novel);
  CHECK(manifest.vocab.attributes == golden.vocab.attributes);
  CHECK(manifest.vocab.decomposition == golden.vocab.decomposition);
  CHECK(manifest.base_train == golden.base_train);
  CHECK(manifest.base_val == golden.base_val);
  CHECK(manifest.novel_train == golden.novel_train);
  CHECK(manifest.novel_val == golden.novel_val);
  CHECK(manifest.thresholds.base == golden.thresholds.base);
  CHECK(manifest.thresholds.novel_low == golden.thresholds.novel_low);
}

TEST_CASE("empty record set produces an empty manifest") {
  auto manifest = build_splits({}, {});
  CHECK(manifest.vocab.base.empty());
  CHECK(manifest.vocab.novel.empty());
  CHECK(manifest.vocab.attributes.empty());
}

TEST_CASE("malformed annotation JSON names a byte offset") {
  const std::string path = temp_path("broken.json");
  write_file(path, "{\"annotations\": [ {\"question_id\": }");
  CHECK_THROWS_WITH_AS(parse_vqa_annotations(path), doctest::Contains("byte"), DataError);
}

TEST_CASE("manifest JSON round-trips") {
  auto train = cvqa_test::fixture_train_records();
  const std::string path = temp_path("fixture_roundtrip.json");
  write_file(path, cvqa_test::fixture_to_json(train));
  auto manifest = build_splits(parse_vqa_annotations(path), {});
  auto restored = SplitManifest::from_json(manifest.to_json());
  CHECK(restored.vocab.base == manifest.vocab.base);
  CHECK(restored.vocab.decomposition == manifest.vocab.decomposition);
  CHECK(restored.base_train == manifest.base_train);
  CHECK(restored.to_json() == manifest.to_json());
}

TEST_CASE("few-shot sampling is deterministic and validates availability") {
  SplitManifest manifest;
  manifest.vocab.attributes = {"a", "b"};
  manifest.vocab.novel = {"a b"};
  manifest.vocab.decomposition["a b"] = {0, 1};
  manifest.vocab.build_indices();
  manifest.novel_train["a b"] = {11, 12, 13, 14, 15};

  auto first = sample_few_shot(manifest, 3, 5);
  auto second = sample_few_shot(manifest, 3, 5);
  CHECK(first == second);
  CHECK(first["a b"].size() == 3);

  auto all = sample_few_shot(manifest, 5, 5);
  CHECK(all["a b"] == std::vector<int64_t>{11, 12, 13, 14, 15});

  CHECK_THROWS_WITH_AS(sample_few_shot(manifest, 6, 5), doctest::Contains("a b"), DataError);
}

TEST_CASE("question vocab maps unknown words to unk and pads to m_max") {
  QuestionVocab vocab = QuestionVocab::build({"what", "color"});
  CHECK(vocab.words[0] == "<pad>");
  CHECK(vocab.words[1] == "<unk>");
  CHECK(vocab.id("what") >= 2);
  CHECK(vocab.id("zebra") == 1);

  QuestionInput q = vocab.encode({"what", "zebra"}, 4);
  CHECK(q.tokens.size() == 4);
  CHECK(q.tokens[1] == 1);
  CHECK(q.pad_mask == std::vector<bool>{false, false, true, true});
}

TEST_CASE("synthetic generation is deterministic and covers novel attributes") {
  SynthConfig config;
  config.groups = {{"action", 3}, {"object", 4}};
  config.base_combos = 6;
  config.examples_per_base = 4;
  config.novel_combos = 3;
  config.novel_pool = 3;
  config.val_per_base = 2;
  config.val_per_novel = 2;
  config.feature_dim = 5;
  config.objects_per_image = 3;
  config.noise = 0.05;
  config.seed = 11;
  config.shot_list = {1, 2};

  const std::string dir_a = temp_path("synth_a");
  const std::string dir_b = temp_path("synth_b");
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  auto summary = gen_synthetic(config, dir_a);
  gen_synthetic(config, dir_b);

  CHECK(summary.n_base == 6);
  CHECK(summary.n_novel == 3);
  CHECK(summary.n_attributes == 7);
  CHECK(summary.n_train_base == 24);

  for (const char* name : {"manifest.json", "train_base.jsonl", "train_novel.jsonl",
                           "val_base.jsonl", "val_novel.jsonl", "features.cvqa"}) {
    CHECK(read_file(dir_a + "/" + std::string(name)) == read_file(dir_b + "/" + std::string(name)));
  }

  auto data = load_dataset(dir_a);
  const auto& vocab = data.manifest.vocab;
  CHECK(vocab.base.size() == 6);
  // every novel attribute appears in at least one base combination
  std::set<int> base_attrs;
  for (const auto& answer : vocab.base) {
    for (int idx : vocab.attrs_of(answer)) base_attrs.insert(idx);
  }
  for (const auto& answer : vocab.novel) {
    for (int idx : vocab.attrs_of(answer)) CHECK(base_attrs.count(idx) == 1);
  }
  // base and novel are disjoint
  for (const auto& answer : vocab.novel) CHECK(vocab.base_index.count(answer) == 0);
  // features exist for every example
  for (const auto& ex : data.train_base) CHECK_NOTHROW(data.features_of(ex.image_key));
  // every manifest shot id exists in the novel pool
  for (const auto& [k, per_answer] : data.manifest.shots) {
    for (const auto& [answer, qids] : per_answer) {
      CHECK(static_cast<int64_t>(qids.size()) == k);
    }
  }
}

TEST_CASE("zero noise produces identical features for one combination") {
  SynthConfig config;
  config.groups = {{"action", 2}, {"object", 2}};
  config.base_combos = 4;
  config.examples_per_base = 2;
  config.novel_combos = 0;
  config.novel_pool = 1;
  config.val_per_base = 0;
  config.val_per_novel = 0;
  config.feature_dim = 4;
  config.objects_per_image = 2;
  config.noise = 0.0;
  config.seed = 3;
  config.shot_list = {};

  const std::string dir = temp_path("synth_zero_noise");
  fs::remove_all(dir);
  gen_synthetic(config, dir);
  auto data = load_dataset(dir);
  REQUIRE(data.train_base.size() == 8);
  for (const auto& answer : data.manifest.vocab.base) {
    const auto& qids = data.manifest.base_train.at(answer);
    REQUIRE(qids.size() == 2);
    const DatasetExample *first = nullptr, *second = nullptr;
    for (const auto& ex : data.train_base) {
      if (ex.qid == qids[0]) first = &ex;
      if (ex.qid == qids[1]) second = &ex;
    }
    REQUIRE(first);
    REQUIRE(second);
    CHECK(data.features_of(first->image_key).values() ==
          data.features_of(second->image_key).values());
  }
}

TEST_CASE("invalid synthetic configs are rejected") {
  SynthConfig config;
  config.groups = {{"action", 5}};
  config.base_combos = 3;  // cannot cover five attributes with three combos
  CHECK_THROWS_AS(config.validate(), UsageError);

  SynthConfig overflow;
  overflow.groups = {{"action", 2}, {"object", 2}};
  overflow.base_combos = 3;
  overflow.novel_combos = 2;  // 3 + 2 > 4
  CHECK_THROWS_AS(overflow.validate(), UsageError);

  CHECK_THROWS_AS(SynthConfig::from_string("bogus_key=1"), UsageError);
}
