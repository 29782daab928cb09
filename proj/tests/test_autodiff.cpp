#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "har/autodiff.hpp"
#include "test_util.hpp"

using namespace har;
using namespace har::ad;
using har::testing::code_of;
using har::testing::grad_check;
using har::testing::random_tensor;
using har::testing::random_weights;

namespace {

Tensor vec(std::vector<double> v, bool rg = false) {
  const std::size_t n = v.size();
  return Tensor({1, 1, n}, std::move(v), rg);
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("conv1d hand traces") {
  Tape tape;
  const Tensor x = vec({1, 2, 3, 4});
  const Tensor w({1, 1, 3}, {1, 0, -1});
  const Tensor b({1}, {0});
  CHECK(as_vector(conv1d(tape, x, w, b, {1, 1, 1})) == std::vector<double>{-2, -2, -2, 3});
  CHECK(as_vector(conv1d(tape, x, w, b, {1, 2, 2})) == std::vector<double>{-3, -4, 1, 2});
  const Tensor id({1, 1, 3}, {0, 1, 0});
  CHECK(as_vector(conv1d(tape, x, id, b, {1, 1, 1})) == std::vector<double>{1, 2, 3, 4});
  CHECK(tape.size() == 0);
}

TEST_CASE("conv1d agrees with the naive oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t N = 1 + rng.below(3), C = 1 + rng.below(4), O = 1 + rng.below(4);
    const std::size_t K = 1 + 2 * rng.below(3), s = 1 + rng.below(2);
    const std::size_t d = std::array<std::size_t, 3>{1, 2, 4}[rng.below(3)], p = rng.below(3);
    const std::size_t L = d * (K - 1) + 1 + rng.below(20);
    const Tensor x = random_tensor(rng, {N, C, L}, false);
    const Tensor w = random_tensor(rng, {O, C, K}, false);
    const Tensor b = random_tensor(rng, {O}, false);
    Tape tape;
    const Tensor y = conv1d(tape, x, w, b, {s, p, d});
    std::size_t lo = 0;
    const auto ref = har::testing::naive_conv1d(x, w, b, s, p, d, lo);
    REQUIRE(y.dim(2) == lo);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.values()[i] - ref[i]) <= 1e-12);
  }
}

TEST_CASE("conv1d is linear in x and w") {
  Rng rng(7);
  const Tensor x1 = random_tensor(rng, {2, 3, 16}, false), x2 = random_tensor(rng, {2, 3, 16}, false);
  const Tensor w = random_tensor(rng, {4, 3, 3}, false);
  const Tensor zero = Tensor::zeros({4});
  std::vector<double> xs(x1.numel());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = 2.0 * x1.values()[i] - 0.5 * x2.values()[i];
  const Tensor xsum({2, 3, 16}, xs);
  Tape tape;
  const Conv1dOptions opt{1, 2, 2};
  const auto y1 = conv1d(tape, x1, w, zero, opt), y2 = conv1d(tape, x2, w, zero, opt);
  const auto ys = conv1d(tape, xsum, w, zero, opt);
  for (std::size_t i = 0; i < ys.numel(); ++i) {
    CHECK(std::abs(ys.values()[i] - (2.0 * y1.values()[i] - 0.5 * y2.values()[i])) <= 1e-10);
  }
  const Tensor w2 = random_tensor(rng, {4, 3, 3}, false);
  std::vector<double> wsv(w.numel());
  for (std::size_t i = 0; i < wsv.size(); ++i) wsv[i] = w.values()[i] + w2.values()[i];
  const auto a = conv1d(tape, x1, w, zero, opt), c = conv1d(tape, x1, w2, zero, opt);
  const auto sum_w = conv1d(tape, x1, Tensor({4, 3, 3}, wsv), zero, opt);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(sum_w.values()[i] - a.values()[i] - c.values()[i]) <= 1e-10);
}

TEST_CASE("conv1d input validation") {
  Tape tape;
  CHECK(code_of([&] { conv1d(tape, vec({1, 2, 3}), Tensor({1, 1, 2}, {1, 1}), Tensor({1}, {0})); }) ==
        ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { conv1d(tape, vec({1, 2, 3}), Tensor({1, 2, 3}, {1, 1, 1, 1, 1, 1}), Tensor({1}, {0})); }) ==
        ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { conv1d(tape, vec({1, 2}), Tensor({1, 1, 3}, {1, 1, 1}), Tensor({1}, {0})); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("conv1d gradients") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t s = 1 + rng.below(2), d = std::array<std::size_t, 3>{1, 2, 4}[rng.below(3)], p = rng.below(3);
    const std::size_t L = 2 * d + 1 + rng.below(8);
    const Tensor x = random_tensor(rng, {2, 2, L}), w = random_tensor(rng, {3, 2, 3}), b = random_tensor(rng, {3});
    Tape probe;
    const auto r = random_weights(rng, conv1d(probe, x, w, b, {s, p, d}).numel());
    const auto res = grad_check({x, w, b}, [&](Tape& t) { return weighted_sum(t, conv1d(t, x, w, b, {s, p, d}), r); });
    CHECK(res.max_rel_error <= 1e-6);
  }
}

TEST_CASE("batch_norm1d hand traces") {
  Tape tape;
  auto state = BatchNormState::fresh(1);
  const Tensor x({2, 1, 1}, {1, 3});
  const auto y = batch_norm1d(tape, x, Tensor({1}, {1}), Tensor({1}, {0}), state, Mode::Train);
  CHECK(std::abs(y.values()[0] + 1.0) <= 1e-4);
  CHECK(std::abs(y.values()[1] - 1.0) <= 1e-4);
  const auto z = batch_norm1d(tape, x, Tensor({1}, {2}), Tensor({1}, {1}), state, Mode::Train);
  CHECK(std::abs(z.values()[0] + 1.0) <= 2e-4);
  CHECK(std::abs(z.values()[1] - 3.0) <= 2e-4);
  // running stats: mean 0.9*0 + 0.1*2, unbiased var 2 -> 0.9*1 + 0.1*2
  auto once = BatchNormState::fresh(1);
  batch_norm1d(tape, x, Tensor({1}, {1}), Tensor({1}, {0}), once, Mode::Train);
  CHECK(once.running_mean[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(once.running_var[0] == doctest::Approx(1.1).epsilon(1e-12));

  auto fresh = BatchNormState::fresh(1);
  const Tensor e({1, 1, 3}, {0.5, -2.0, 7.0});
  const auto ev = batch_norm1d(tape, e, Tensor({1}, {1}), Tensor({1}, {0}), fresh, Mode::Eval);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(ev.values()[i] - e.values()[i]) <= 1e-5 * std::abs(e.values()[i]));
  CHECK(fresh.running_mean[0] == 0.0);
  CHECK(code_of([&] {
          auto st = BatchNormState::fresh(1);
          batch_norm1d(tape, Tensor({1, 1, 1}, {1.0}), Tensor({1}, {1}), Tensor({1}, {0}), st, Mode::Train);
        }) == ErrorCode::DegenerateBatch);
}

TEST_CASE("batch_norm1d train output is standardized") {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {4, 3, 10}, false, 3.0);
  auto state = BatchNormState::fresh(3);
  Tape tape;
  const auto y = batch_norm1d(tape, x, Tensor({3}, {1, 1, 1}), Tensor::zeros({3}), state, Mode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 10; ++i) m += y.values()[(n * 3 + c) * 10 + i];
    }
    m /= 40.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 10; ++i) v += std::pow(y.values()[(n * 3 + c) * 10 + i] - m, 2);
    }
    v /= 40.0;
    CHECK(std::abs(m) <= 1e-7);
    CHECK(std::abs(v - 1.0) <= 1e-4);
  }
}

TEST_CASE("batch_norm1d gradients in both modes") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor(rng, {3, 2, 5}), g = random_tensor(rng, {2}), b = random_tensor(rng, {2});
    const auto r = random_weights(rng, 30);
    auto state = BatchNormState::fresh(2);
    const auto train = grad_check({x, g, b}, [&](Tape& t) {
      return weighted_sum(t, batch_norm1d(t, x, g, b, state, Mode::Train), r);
    });
    CHECK(train.max_rel_error <= 1e-5);
    state.running_mean = {0.3, -0.2};
    state.running_var = {1.7, 0.4};
    const auto eval = grad_check({x, g, b}, [&](Tape& t) {
      return weighted_sum(t, batch_norm1d(t, x, g, b, state, Mode::Eval), r);
    });
    CHECK(eval.max_rel_error <= 1e-6);
  }
}

TEST_CASE("relu values, subgradient and gradients") {
  Tape t0;
  const Tensor x = vec({-1, 0, 2});
  CHECK(as_vector(relu(t0, x)) == std::vector<double>{0, 0, 2});

  const Tensor neg = vec({-1, -2, -3}, true);
  {
    Tape tape;
    backward(tape, sum(tape, relu(tape, neg)));
    CHECK(as_vector(Tensor({3}, {neg.grad().begin(), neg.grad().end()})) == std::vector<double>{0, 0, 0});
  }
  const Tensor pos = vec({1, 2, 3}, true);
  {
    Tape tape;
    backward(tape, weighted_sum(tape, relu(tape, pos), std::vector<double>{4, 5, 6}));
    CHECK(std::vector<double>(pos.grad().begin(), pos.grad().end()) == std::vector<double>{4, 5, 6});
  }
  const Tensor at0 = vec({-1, 0, 2}, true);
  {
    Tape tape;
    backward(tape, sum(tape, relu(tape, at0)));
    CHECK(std::vector<double>(at0.grad().begin(), at0.grad().end()) == std::vector<double>{0, 0, 1});
  }

  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> v(24);
    for (double& e : v) {
      const double n = rng.normal();
      e = (n < 0 ? -1.0 : 1.0) * (0.05 + std::abs(n));
    }
    const Tensor xt({2, 3, 4}, v, true);
    const auto r = random_weights(rng, 24);
    CHECK(grad_check({xt}, [&](Tape& t) { return weighted_sum(t, relu(t, xt), r); }).max_rel_error <= 1e-8);
  }
}

TEST_CASE("add and avg_pool1d") {
  Tape tape;
  const Tensor x = vec({1, 2, 3, 4});
  CHECK(as_vector(avg_pool1d(tape, x, 2, 2)) == std::vector<double>{1.5, 3.5});
  CHECK(as_vector(avg_pool1d(tape, x, 4, 4)) == std::vector<double>{2.5});
  CHECK(as_vector(avg_pool1d(tape, vec({3, 3, 3, 3, 3, 3}), 3, 3)) == std::vector<double>{3, 3});
  CHECK(as_vector(add(tape, x, x)) == std::vector<double>{2, 4, 6, 8});
  CHECK(code_of([&] { add(tape, x, vec({1, 2})); }) == ErrorCode::ShapeMismatch);

  Rng rng(19);
  const Tensor big = random_tensor(rng, {2, 3, 12}, false);
  const auto pooled = avg_pool1d(tape, big, 4, 4);
  double m1 = 0, m2 = 0;
  for (double v : big.values()) m1 += v;
  for (double v : pooled.values()) m2 += v;
  CHECK(std::abs(m1 / 72.0 - m2 / 18.0) <= 1e-12);

  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_tensor(rng, {2, 2, 9}), b = random_tensor(rng, {2, 2, 9});
    const std::size_t k = 1 + rng.below(3), s = 1 + rng.below(3);
    Tape probe;
    const auto r = random_weights(rng, avg_pool1d(probe, a, k, s).numel());
    const auto r2 = random_weights(rng, 36);
    CHECK(grad_check({a}, [&](Tape& t) { return weighted_sum(t, avg_pool1d(t, a, k, s), r); }).max_rel_error <= 1e-8);
    CHECK(grad_check({a, b}, [&](Tape& t) { return weighted_sum(t, add(t, a, b), r2); }).max_rel_error <= 1e-8);
  }
}

TEST_CASE("affine and flatten") {
  Tape tape;
  const Tensor x({1, 2}, {2, 3});
  CHECK(as_vector(affine(tape, x, Tensor({1, 2}, {1, 1}), Tensor({1}, {0}))) == std::vector<double>{5});
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  CHECK(as_vector(affine(tape, x, eye, Tensor::zeros({2}))) == std::vector<double>{2, 3});
  const auto f = flatten(tape, Tensor::zeros({2, 3, 4}));
  CHECK(f.shape() == Shape{2, 12});

  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor xi = random_tensor(rng, {3, 2, 2}), w = random_tensor(rng, {5, 4}), b = random_tensor(rng, {5});
    const auto r = random_weights(rng, 15);
    const auto res = grad_check({xi, w, b}, [&](Tape& t) { return weighted_sum(t, affine(t, flatten(t, xi), w, b), r); });
    CHECK(res.max_rel_error <= 1e-8);
  }
}

TEST_CASE("softmax cross entropy") {
  Tape tape;
  const Tensor zeros = Tensor::zeros({1, 6}, true);
  const std::vector<std::size_t> t0{0};
  const auto ce = softmax_cross_entropy(tape, zeros, t0);
  CHECK(std::abs(ce.loss.item() - std::log(6.0)) <= 1e-12);
  for (double p : ce.probs.values()) CHECK(std::abs(p - 1.0 / 6.0) <= 1e-15);
  backward(tape, ce.loss);
  const std::vector<double> expected{-5.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(zeros.grad()[i] - expected[i]) <= 1e-15);

  Tape t2;
  const Tensor confident({1, 6}, {10, -10, -10, -10, -10, -10});
  CHECK(softmax_cross_entropy(t2, confident, t0).loss.item() < 1e-4);
  const std::vector<std::size_t> bad{6};
  CHECK(code_of([&] { softmax_cross_entropy(t2, confident, bad); }) == ErrorCode::InvalidTarget);

  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = random_tensor(rng, {4, 6}, true, 3.0);
    std::vector<std::size_t> targets;
    for (int i = 0; i < 4; ++i) targets.push_back(rng.below(6));
    const auto res = grad_check({logits}, [&](Tape& t) { return softmax_cross_entropy(t, logits, targets).loss; });
    CHECK(res.max_rel_error <= 1e-5);
    const auto p = softmax(logits);
    for (std::size_t n = 0; n < 4; ++n) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        const double v = p.values()[n * 6 + c];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("backward basics") {
  const Tensor w({1, 1}, {3.0}, true);
  Tape tape;
  const auto sq = affine(tape, w, w, Tensor::zeros({1}));
  backward(tape, sum(tape, sq));
  CHECK(std::abs(w.grad()[0] - 6.0) <= 1e-9);

  const Tensor x = vec({-1, 2}, true);
  Tape t2;
  backward(t2, sum(t2, relu(t2, x)));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 1});

  Tape t3;
  const Tensor detached = Tensor::scalar(1.0, true);
  CHECK(code_of([&] { backward(t3, detached); }) == ErrorCode::DetachedLoss);
  const Tensor y = vec({1, 2}, true);
  const auto r = relu(t3, y);
  CHECK(code_of([&] { backward(t3, r); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("composite graph with shared inputs") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor(rng, {2, 2, 8});
    const Tensor w1 = random_tensor(rng, {2, 2, 3}), b1 = random_tensor(rng, {2});
    const Tensor g = random_tensor(rng, {2}), be = random_tensor(rng, {2});
    const Tensor hw = random_tensor(rng, {3, 2}), hb = random_tensor(rng, {3});
    const std::vector<std::size_t> targets{rng.below(3), rng.below(3)};
    auto state = BatchNormState::fresh(2);
    const auto res = grad_check({x, w1, b1, g, be, hw, hb}, [&](Tape& t) {
      auto h = conv1d(t, x, w1, b1, {1, 2, 2});
      h = batch_norm1d(t, h, g, be, state, Mode::Train);
      h = add(t, h, x);
      h = avg_pool1d(t, h, 8, 8);
      return softmax_cross_entropy(t, affine(t, flatten(t, h), hw, hb), targets).loss;
    });
    CHECK(res.max_rel_error <= 1e-5);
  }
}
