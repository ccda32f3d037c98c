#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cvqa/errors.hpp"
#include "cvqa/gradcheck.hpp"
#include "cvqa/ops.hpp"
#include "cvqa/param_store.hpp"
#include "cvqa/rng.hpp"
#include "cvqa/tensor.hpp"

using namespace cvqa;

TEST_CASE("relu forward and subgradient") {
  Tensor x = Tensor::from_values({2}, {-1.0, 2.0}, true);
  Tensor y = relu(x);
  CHECK(y.values()[0] == 0.0);
  CHECK(y.values()[1] == 2.0);

  backward(sum_all(y));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);

  Tensor zeros = Tensor::from_values({2}, {0.0, 0.0}, true);
  Tensor yz = relu(zeros);
  CHECK(yz.values()[0] == 0.0);
  backward(sum_all(yz));
  CHECK(zeros.grad()[0] == 0.0);  // gradient at exactly 0 is 0
}

TEST_CASE("sigmoid is stable and has the right derivative") {
  Tensor x = Tensor::from_values({3}, {0.0, -100.0, 100.0}, true);
  Tensor y = sigmoid(x);
  CHECK(y.values()[0] == doctest::Approx(0.5));
  CHECK(y.values()[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.values()[2] == doctest::Approx(1.0));
  CHECK(std::isfinite(y.values()[1]));

  backward(sum_all(y));
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("softmax normalizes, shifts, and matches a hand-evaluated case") {
  Tensor uniform = softmax(Tensor::from_values({3}, {0.0, 0.0, 0.0}), 0);
  for (double v : uniform.values()) CHECK(v == doctest::Approx(1.0 / 3.0));

  Tensor big = softmax(Tensor::from_values({2}, {1000.0, 1000.0}), 0);
  CHECK(big.values()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(big.values()[0]));

  // e^0 / (e^0 + 3) = 0.25 for logits [0, ln 3]
  Tensor hand = softmax(Tensor::from_values({2}, {0.0, std::log(3.0)}), 0);
  CHECK(hand.values()[0] == doctest::Approx(0.25));
  CHECK(hand.values()[1] == doctest::Approx(0.75));

  CHECK_THROWS_AS(softmax(Tensor::from_values({2}, {0.0, 1.0}), 3), UsageError);
}

TEST_CASE("softmax slices sum to one for arbitrary finite logits") {
  auto rng = make_rng(5, "test");
  std::uniform_real_distribution<double> wild(-500.0, 500.0);
  Tensor x = Tensor::zeros({7, 11});
  for (double& v : x.values()) v = wild(rng);
  for (int axis : {0, 1}) {
    Tensor y = softmax(x, axis);
    const int64_t slices = axis == 0 ? 11 : 7;
    const int64_t len = axis == 0 ? 7 : 11;
    for (int64_t s = 0; s < slices; ++s) {
      double total = 0.0;
      for (int64_t i = 0; i < len; ++i) total += axis == 0 ? y.at(i, s) : y.at(s, i);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("matmul matches a hand-computed product and checks shapes") {
  Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_values({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 58.0);
  CHECK(c.at(0, 1) == 64.0);
  CHECK(c.at(1, 0) == 139.0);
  CHECK(c.at(1, 1) == 154.0);

  Tensor v = Tensor::from_values({3}, {1, 0, -1});
  Tensor mv = matmul(a, v);
  CHECK(mv.shape() == Shape{2});
  CHECK(mv.values()[0] == doctest::Approx(1.0 - 3.0));

  CHECK_THROWS_WITH_AS(matmul(a, Tensor::zeros({2, 2})),
                       doctest::Contains("[2x3]"), UsageError);
}

TEST_CASE("hadamard with ones is the identity") {
  Tensor x = Tensor::from_values({2, 2}, {1.5, -2.0, 0.25, 3.0});
  Tensor y = hadamard(x, Tensor::full({2, 2}, 1.0));
  CHECK(y.values() == x.values());
  CHECK_THROWS_AS(hadamard(x, Tensor::zeros({2, 3})), UsageError);
}

TEST_CASE("broadcast_row repeats the vector in every row") {
  Tensor p = Tensor::from_values({3}, {1.0, 2.0, 3.0}, true);
  Tensor b = broadcast_row(p, 4);
  CHECK(b.shape() == Shape{4, 3});
  for (int64_t i = 0; i < 4; ++i) {
    CHECK(b.at(i, 0) == 1.0);
    CHECK(b.at(i, 2) == 3.0);
  }
  backward(sum_all(b));
  CHECK(p.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("transpose round-trips and sum_axis reduces the right way") {
  Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor xt = transpose(x);
  CHECK(xt.shape() == Shape{3, 2});
  CHECK(xt.at(2, 1) == 6.0);

  Tensor rows = sum_axis(x, 1);
  CHECK(rows.values() == std::vector<double>{6.0, 15.0});
  Tensor cols = sum_axis(x, 0);
  CHECK(cols.values() == std::vector<double>{5.0, 7.0, 9.0});
}

TEST_CASE("dropout eval mode and p=0 are identities") {
  auto rng = make_rng(1, "dropout");
  Tensor x = Tensor::from_values({4}, {1, 2, 3, 4});
  Tensor eval_out = dropout(x, 0.5, false, rng);
  CHECK(eval_out.values() == x.values());
  Tensor p0 = dropout(x, 0.0, true, rng);
  CHECK(p0.values() == x.values());
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), UsageError);
}

TEST_CASE("dropout zero fraction and expectation at p=0.5") {
  auto rng = make_rng(99, "dropout");
  const int64_t n = 100000;
  Tensor x = Tensor::full({n}, 2.0);
  Tensor y = dropout(x, 0.5, true, rng);
  int64_t zeros = 0;
  double mean = 0.0;
  for (double v : y.values()) {
    if (v == 0.0) ++zeros;
    mean += v;
  }
  mean /= static_cast<double>(n);
  const double zero_fraction = static_cast<double>(zeros) / static_cast<double>(n);
  CHECK(zero_fraction == doctest::Approx(0.5).epsilon(0.02));      // 0.5 +- 0.01
  CHECK(mean == doctest::Approx(2.0).epsilon(0.01));               // expectation preserved to 1%
}

TEST_CASE("weight_norm scales rows to |g| exactly") {
  Tensor v = Tensor::from_values({2, 2}, {3.0, 4.0, 1.0, 0.0});
  Tensor g = Tensor::from_values({2}, {5.0, 2.0});
  Tensor w = weight_norm(v, g);
  CHECK(w.at(0, 0) == doctest::Approx(3.0));
  CHECK(w.at(0, 1) == doctest::Approx(4.0));
  CHECK(w.at(1, 0) == doctest::Approx(2.0));
  CHECK(w.at(1, 1) == doctest::Approx(0.0));

  // per-row norm equals |g|
  auto rng = make_rng(3, "wn");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor v2 = Tensor::zeros({5, 7});
  for (double& x : v2.values()) x = normal(rng);
  Tensor g2 = Tensor::from_values({5}, {0.5, -1.5, 2.0, 3.25, -0.75});
  Tensor w2 = weight_norm(v2, g2);
  for (int64_t i = 0; i < 5; ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < 7; ++j) sq += w2.at(i, j) * w2.at(i, j);
    CHECK(std::sqrt(sq) == doctest::Approx(std::abs(g2.values()[i])).epsilon(1e-6));
  }

  Tensor zero_row = Tensor::from_values({2, 2}, {1.0, 1.0, 0.0, 0.0});
  CHECK_THROWS_AS(weight_norm(zero_row, g), UsageError);
}

TEST_CASE("backward basics: seed, unused parameters, usage errors") {
  Tensor x = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
  backward(sum_all(x));
  CHECK(x.grad() == std::vector<double>{1.0, 1.0, 1.0});

  Tensor w = Tensor::from_values({2}, {1.0, 1.0}, true);
  Tensor unrelated = Tensor::from_values({2}, {3.0, 4.0}, true);
  backward(sum_all(hadamard(unrelated, unrelated)));
  CHECK(w.grad() == std::vector<double>{0.0, 0.0});

  CHECK_THROWS_AS(backward(x), UsageError);  // non-scalar loss
}

TEST_CASE("bce_with_logits hand values and saturation") {
  // single answer, y = 0.5, s = 0 -> ln 2
  Tensor s = Tensor::from_values({1}, {0.0}, true);
  Tensor y = Tensor::from_values({1}, {0.5});
  CHECK(bce_with_logits(s, y).item() == doctest::Approx(std::log(2.0)));

  // exact labels at saturated scores -> ~0 without overflow
  Tensor s2 = Tensor::from_values({2}, {100.0, -100.0});
  Tensor y2 = Tensor::from_values({2}, {1.0, 0.0});
  CHECK(bce_with_logits(s2, y2).item() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isfinite(bce_with_logits(s2, y2).item()));

  Tensor bad = Tensor::from_values({1}, {1.5});
  CHECK_THROWS_AS(bce_with_logits(s, bad), UsageError);
}

TEST_CASE("cross_entropy_logits singleton and uniform cases") {
  Tensor single = Tensor::from_values({1}, {3.7});
  CHECK(cross_entropy_logits(single, 0).item() == doctest::Approx(0.0));

  Tensor uniform = Tensor::from_values({4}, {1.0, 1.0, 1.0, 1.0});
  CHECK(cross_entropy_logits(uniform, 2).item() == doctest::Approx(std::log(4.0)));
}

TEST_CASE("finite_diff_check: quadratic, constant, and a composite graph") {
  ParamStore params;
  auto rng = make_rng(17, "fd");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor w = Tensor::zeros({4});
  for (double& v : w.values()) v = normal(rng);
  params.add("w", w);

  auto quadratic = [&] { return sum_all(hadamard(params.get("w"), params.get("w"))); };
  CHECK(finite_diff_check(quadratic, params).max_rel_error < 1e-8);

  auto constant = [&] { return Tensor::scalar(2.5); };
  CHECK(finite_diff_check(constant, params).max_rel_error == 0.0);

  Tensor m = Tensor::zeros({3, 4});
  for (double& v : m.values()) v = normal(rng);
  params.add("m", m);
  auto composite = [&] {
    Tensor h = sigmoid(matmul(params.get("m"), relu(affine(params.get("w"), 1.0, 0.3))));
    return sum_all(hadamard(h, h));
  };
  CHECK(finite_diff_check(composite, params).max_rel_error <= 1e-4);
}

TEST_CASE("frozen parameters receive no gradient and keep their bits") {
  ParamStore params;
  params.add("a", Tensor::from_values({2}, {1.0, 2.0}));
  params.add("b", Tensor::from_values({2}, {3.0, 4.0}));
  params.freeze("b");
  const auto before = params.get("b").values();

  Tensor loss = sum_all(hadamard(params.get("a"), params.get("b")));
  backward(loss);
  CHECK(params.get("a").grad() == std::vector<double>{3.0, 4.0});
  CHECK(params.get("b").grad() == std::vector<double>{0.0, 0.0});
  CHECK(params.get("b").values() == before);
  CHECK(params.trainable_names() == std::vector<std::string>{"a"});
}

// Property test: random compositions of primitives agree with central
// differences. Inputs stay away from the relu kink and division by zero.
TEST_CASE("random small graphs pass the finite-difference check") {
  for (uint64_t trial = 0; trial < 30; ++trial) {
    auto rng = make_rng(trial, "graphgen");
    std::uniform_real_distribution<double> uni(0.2, 1.5);
    std::uniform_int_distribution<int> coin(0, 4);

    ParamStore params;
    Tensor a = Tensor::zeros({3, 3});
    Tensor b = Tensor::zeros({3, 3});
    Tensor v = Tensor::zeros({3});
    for (double& x : a.values()) x = uni(rng);
    for (double& x : b.values()) x = uni(rng);
    for (double& x : v.values()) x = uni(rng);
    params.add("a", a);
    params.add("b", b);
    params.add("v", v);
    const int which = coin(rng);

    auto build = [&] {
      Tensor pa = params.get("a");
      Tensor pb = params.get("b");
      Tensor pv = params.get("v");
      Tensor x;
      switch (which) {
        case 0: x = matmul(hadamard(pa, pb), broadcast_row(pv, 3)); break;
        case 1: x = softmax(add(pa, transpose(pb)), 1); break;
        case 2: x = div(sigmoid(pa), affine(tanh_op(pb), 0.5, 2.0)); break;
        case 3: x = matmul(sub(pa, pb), relu(affine(pv, 1.0, 0.4))); break;
        default: x = sqrt_op(affine(hadamard(pa, pa), 1.0, 0.1)); break;
      }
      Tensor flat = x.rank() == 2 ? sum_axis(x, 0) : x;
      return sum_all(hadamard(flat, flat));
    };
    auto result = finite_diff_check(build, params);
    INFO("trial ", trial, " graph ", which, " worst ", result.worst_param);
    CHECK(result.max_rel_error <= 1e-4);
  }
}

TEST_CASE("weight-normalized linear map passes the gradient check") {
  ParamStore params;
  auto rng = make_rng(21, "wn-fd");
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor v = Tensor::zeros({3, 4});
  for (double& x : v.values()) x = normal(rng);
  Tensor g = Tensor::from_values({3}, {1.0, -2.0, 0.5});
  Tensor input = Tensor::zeros({4});
  for (double& x : input.values()) x = normal(rng);
  params.add("v", v);
  params.add("g", g);

  auto loss = [&] {
    Tensor w = weight_norm(params.get("v"), params.get("g"));
    Tensor y = matmul(w, input);
    return sum_all(hadamard(y, y));
  };
  CHECK(finite_diff_check(loss, params).max_rel_error <= 1e-4);
}
