#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cvqa/config.hpp"
#include "cvqa/errors.hpp"
#include "cvqa/metrics.hpp"
#include "cvqa/rng.hpp"
#include "cvqa/tensor_io.hpp"
#include "cvqa/train.hpp"

using namespace cvqa;
namespace fs = std::filesystem;

TEST_CASE("adamax first step moves by -lr * sign(g)") {
  ParamStore params;
  auto rng = make_rng(2, "adamax");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor w = Tensor::zeros({64});
  std::vector<double> grads(64);
  for (double& g : grads) g = normal(rng);
  params.add("w", w);
  params.get("w").mutable_grad() = grads;

  AdamaxState state;
  const double lr = 0.01;
  adamax_step(params, state, lr);
  CHECK(state.t == 1);
  for (size_t i = 0; i < grads.size(); ++i) {
    const double expected = -lr * (grads[i] > 0 ? 1.0 : grads[i] < 0 ? -1.0 : 0.0);
    CHECK(params.get("w").values()[i] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("adamax leaves parameters alone for zero gradients and zero lr") {
  ParamStore params;
  params.add("w", Tensor::from_values({3}, {1.0, -2.0, 0.5}));
  AdamaxState state;
  adamax_step(params, state, 0.01);  // grads default to zero
  CHECK(params.get("w").values() == std::vector<double>{1.0, -2.0, 0.5});

  params.get("w").mutable_grad() = {1.0, 1.0, 1.0};
  adamax_step(params, state, 0.0);  // lr = 0: state advances, values do not
  CHECK(state.t == 2);
  CHECK(params.get("w").values() == std::vector<double>{1.0, -2.0, 0.5});
}

TEST_CASE("frozen parameters are untouched even with nonzero gradients") {
  ParamStore params;
  params.add("w", Tensor::from_values({2}, {1.0, 2.0}));
  params.add("frozen", Tensor::from_values({2}, {5.0, 6.0}));
  params.get("w").mutable_grad() = {1.0, 1.0};
  params.get("frozen").mutable_grad() = {1.0, 1.0};
  params.freeze("frozen");

  AdamaxState state;
  adamax_step(params, state, 0.1);
  CHECK(params.get("frozen").values() == std::vector<double>{5.0, 6.0});
  CHECK(params.get("w").values()[0] != 1.0);
}

TEST_CASE("base learning-rate schedule matches the piecewise table for epochs 1-60") {
  for (int64_t epoch = 1; epoch <= 60; ++epoch) {
    double expected;
    if (epoch <= 4) expected = 0.001 * static_cast<double>(epoch);
    else if (epoch <= 11) expected = 0.004;
    else if (epoch <= 13) expected = 0.001;
    else expected = 0.00025;
    CHECK(base_lr_schedule(epoch) == doctest::Approx(expected));
  }
  CHECK(base_lr_schedule(2) == doctest::Approx(0.002));
  CHECK(base_lr_schedule(8) == doctest::Approx(0.004));
  CHECK(base_lr_schedule(14) == doctest::Approx(0.00025));
}

TEST_CASE("novel learning-rate schedule has per-shot plateaus then 0.001") {
  const std::vector<std::pair<int64_t, int64_t>> plateaus = {{1, 55}, {5, 35}, {10, 20}};
  for (const auto& [k, plateau] : plateaus) {
    for (int64_t epoch = 1; epoch <= 60; ++epoch) {
      const double expected = epoch <= plateau ? 0.004 : 0.001;
      CHECK(novel_lr_schedule(epoch, k) == doctest::Approx(expected));
    }
    CHECK(novel_total_epochs(k) == plateau + 5);
  }
  CHECK(novel_lr_schedule(55, 1) == doctest::Approx(0.004));
  CHECK(novel_lr_schedule(56, 1) == doctest::Approx(0.001));
  CHECK(novel_lr_schedule(21, 10) == doctest::Approx(0.001));
  CHECK(novel_lr_schedule(35, 5) == doctest::Approx(0.004));
  // unsupported k snaps to the nearest plateau
  CHECK(novel_plateau_epochs(9) == 20);
  CHECK(novel_plateau_epochs(2) == 55);
}

TEST_CASE("evaluate: soft scores, top-5 membership, and degenerate cases") {
  // one question, prediction matches an answer given by >= 3 annotators
  std::vector<std::vector<double>> scores = {{0.9, 0.1, 0.0, 0.0, 0.0, 0.0}};
  std::vector<std::unordered_map<int64_t, double>> truth = {{{0, 1.0}}};
  auto report = evaluate(scores, truth, EvalMode::kSoft);
  CHECK(report.top1 == 1.0);
  CHECK(report.top5 == 1.0);

  // correct answer ranked fourth counts for top-5 only
  scores = {{0.9, 0.8, 0.7, 0.6, 0.5, 0.4}};
  truth = {{{3, 1.0}}};
  report = evaluate(scores, truth, EvalMode::kSoft);
  CHECK(report.top1 == 0.0);
  CHECK(report.top5 == 1.0);

  // all predictions wrong
  truth = {{{5, 1.0}}};
  scores = {{0.9, 0.8, 0.7, 0.6, 0.5, 0.4}};
  report = evaluate(scores, truth, EvalMode::kSoft);
  CHECK(report.top1 == 0.0);
  CHECK(report.top5 == 0.0);

  // exact mode binarizes the truth map onto its top answer
  scores = {{0.2, 0.9}};
  truth = {{{0, 0.6}, {1, 0.9}}};
  report = evaluate(scores, truth, EvalMode::kExact);
  CHECK(report.top1 == 1.0);

  CHECK_THROWS_AS(evaluate({}, {}, EvalMode::kSoft), UsageError);
}

TEST_CASE("top5 >= top1 for random score matrices") {
  auto rng = make_rng(31, "metrics");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<double>> scores(8, std::vector<double>(12));
    std::vector<std::unordered_map<int64_t, double>> truth(8);
    for (auto& row : scores) {
      for (double& v : row) v = uni(rng);
    }
    for (auto& t : truth) {
      t[static_cast<int64_t>(uni(rng) * 12)] = uni(rng);
    }
    auto report = evaluate(scores, truth, EvalMode::kSoft);
    CHECK(report.top5 >= report.top1);
    CHECK(report.top1 >= 0.0);
    CHECK(report.top5 <= 1.0);
  }
}

TEST_CASE("metrics CSV has fixed columns and blank missing fields") {
  EpochTrace a;
  a.epoch = 1;
  a.split = "train";
  a.loss_b = 0.5;
  EpochTrace b;
  b.epoch = 1;
  b.split = "val";
  b.top1 = 0.25;
  b.top5 = 0.5;
  const std::string csv = traces_to_csv({a, b});
  CHECK(csv == "epoch,split,loss_a,loss_b,loss_ab,loss_n,loss_an,top1,top5\n"
               "1,train,,0.5,,,,,\n"
               "1,val,,,,,,0.25,0.5\n");
}

TEST_CASE("checkpoint container round-trips and rejects bad headers") {
  const std::string path = (fs::temp_directory_path() / "cvqa_ckpt_test.cvqa").string();
  ParamStore params;
  params.add("w", Tensor::from_values({2, 2}, {1.0, 2.0, 3.0, 4.0}));
  params.add("b", Tensor::from_values({3}, {0.5, -0.5, 0.25}));
  save_checkpoint(path, params);

  ParamStore restored;
  restored.add("w", Tensor::zeros({2, 2}));
  restored.add("b", Tensor::zeros({3}));
  load_checkpoint(path, restored);
  CHECK(restored.get("w").values() == params.get("w").values());
  CHECK(restored.get("b").values() == params.get("b").values());

  // save(load(x)) is bit-stable
  const std::string path2 = path + ".2";
  save_checkpoint(path2, restored);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);

  // wrong magic
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE" << std::string(16, '\0');
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path, restored), doctest::Contains("magic"), DataError);

  // wrong shape
  save_checkpoint(path, params);
  ParamStore mismatched;
  mismatched.add("w", Tensor::zeros({2, 2}));
  mismatched.add("b", Tensor::zeros({4}));
  CHECK_THROWS_AS(load_checkpoint(path, mismatched), DataError);
}

TEST_CASE("run config round-trips and rejects unknown keys") {
  RunConfig config;
  config.c_dim = 32;
  config.k_dim = 32;
  config.lambda = 0.25;
  config.head_mode = HeadMode::kSum;
  config.data_dir = "/tmp/data";
  const std::string text = config.serialize();
  RunConfig restored = RunConfig::from_string(text);
  CHECK(restored.serialize() == text);
  CHECK(restored.lambda == config.lambda);
  CHECK(restored.head_mode == HeadMode::kSum);

  CHECK_THROWS_WITH_AS(RunConfig::from_string("bogus=1"), doctest::Contains("bogus"), UsageError);
  CHECK_THROWS_AS(RunConfig::from_string("c_dim=8\nk_dim=16").validate(), UsageError);
  CHECK_THROWS_AS(RunConfig::from_string("head_mode=fancy"), UsageError);
  CHECK_THROWS_AS(RunConfig::from_string("lambda=-1").validate(), UsageError);

  // comments and overrides
  RunConfig commented = RunConfig::from_string("# a comment\nlambda=0.5 # trailing\n");
  CHECK(commented.lambda == 0.5);
  commented.set("lambda", "0.75");
  CHECK(commented.lambda == 0.75);
}
