#include "doctest.h"

#include <cmath>

#include "har/signal.hpp"
#include "har/synth.hpp"
#include "har/train.hpp"
#include "test_util.hpp"

using namespace har;
using har::testing::code_of;

namespace {

std::vector<Window> synthetic_windows(std::uint64_t seed, int per_class, double seconds, int subjects = 0) {
  SynthSpec spec;
  spec.per_class_counts.fill(per_class);
  spec.duration_seconds = seconds;
  spec.seed = seed;
  spec.subjects = subjects;
  std::vector<Window> out;
  for (const auto& r : synth_generate(spec)) {
    auto ws = window_stream(resample_recording(r, 20.0));
    out.insert(out.end(), ws.begin(), ws.end());
  }
  return out;
}

HarModelConfig tiny_model() {
  HarModelConfig cfg;
  cfg.block_widths = {4, 8, 8};
  cfg.seed = 3;
  return cfg;
}

double norm_at(const Window& w, std::size_t i) {
  return std::hypot(w.data[i], w.data[w.length + i], w.data[2 * w.length + i]);
}

}  // namespace

TEST_CASE("one-cycle schedule closed forms") {
  const TrainConfig cfg;
  const std::size_t total = 1000;
  CHECK(std::abs(one_cycle_lr(0, total, cfg) - 4.0e-5) <= 1e-12);
  CHECK(one_cycle_peak_step(total, cfg) == 300);
  CHECK(std::abs(one_cycle_lr(300, total, cfg) - 1.0e-3) <= 1e-12);
  CHECK(std::abs(one_cycle_lr(total - 1, total, cfg) - 4.0e-9) <= 1e-12);
  CHECK(code_of([&] { one_cycle_lr(total, total, cfg); }) == ErrorCode::StepOutOfRange);

  for (std::size_t n : {2u, 7u, 64u, 1000u, 1751u}) {
    std::size_t argmax = 0, maxima = 0;
    double best = -1.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double lr = one_cycle_lr(s, n, cfg);
      CHECK(lr > 0.0);
      if (lr > best) {
        best = lr;
        argmax = s;
      }
    }
    for (std::size_t s = 0; s < n; ++s) maxima += one_cycle_lr(s, n, cfg) == best ? 1 : 0;
    CHECK(maxima == 1);
    CHECK(argmax == one_cycle_peak_step(n, cfg));
    CHECK(best == cfg.max_lr);
  }
  // monotone on each side of the peak
  for (std::size_t s = 1; s < total; ++s) {
    const double a = one_cycle_lr(s - 1, total, cfg), b = one_cycle_lr(s, total, cfg);
    if (s <= 300) CHECK(b >= a);
    else CHECK(b <= a);
  }
}

TEST_CASE("sgd steps") {
  ad::Tensor p({1}, {1.0}, true);
  p.grad_buffer()[0] = 0.5;
  std::vector<ad::Tensor> ps{p};
  Sgd(0.0).step(ps, 0.1);
  CHECK(std::abs(p.values()[0] - 0.95) <= 1e-15);

  ad::Tensor q({2}, {3.0, -4.0}, true);
  q.grad_buffer();
  std::vector<ad::Tensor> qs{q};
  Sgd(0.0).step(qs, 0.1);
  CHECK(q.values()[0] == 3.0);
  CHECK(q.values()[1] == -4.0);

  ad::Tensor m({1}, {0.0}, true);
  std::vector<ad::Tensor> ms{m};
  Sgd heavy(0.9);
  m.grad_buffer()[0] = 1.0;
  heavy.step(ms, 0.1);
  m.grad_buffer()[0] = 1.0;
  heavy.step(ms, 0.1);
  CHECK(std::abs(m.values()[0] + 0.29) <= 1e-12);

  ad::Tensor a({2}, {1.0, 2.0}, true), b({1}, {5.0}, true);
  a.grad_buffer()[0] = 1.0;
  b.grad_buffer()[0] = std::nan("");
  std::vector<ad::Tensor> ab{a, b};
  CHECK(code_of([&] { Sgd().step(ab, 0.1); }) == ErrorCode::NonFiniteGradient);
  CHECK(a.values()[0] == 1.0);
  CHECK(b.values()[0] == 5.0);

  ad::Tensor d({1}, {2.0}, true);
  d.grad_buffer()[0] = 0.0;
  std::vector<ad::Tensor> ds{d};
  Sgd(0.0, 0.5).step(ds, 0.1);
  CHECK(std::abs(d.values()[0] - 1.9) <= 1e-15);
}

TEST_CASE("best epoch is the first minimum") {
  const std::vector<double> v{1.0, 0.4, 0.7};
  CHECK(best_epoch_index(v) == 1);
  const std::vector<double> tie{0.5, 0.3, 0.3};
  CHECK(best_epoch_index(tie) == 1);
  CHECK(code_of([] { best_epoch_index({}); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("training validation errors") {
  const auto ws = synthetic_windows(1, 1, 8.0);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK(code_of([&] { train(tiny_model(), cfg, {}, ws); }) == ErrorCode::EmptyDataset);
  auto unlabeled = ws;
  unlabeled[0].label.reset();
  CHECK(code_of([&] { train(tiny_model(), cfg, unlabeled, ws); }) == ErrorCode::EmptyDataset);
  cfg.batch_size = 0;
  CHECK(code_of([&] { train(tiny_model(), cfg, ws, ws); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("training is deterministic and snapshots the best epoch") {
  const auto tr = synthetic_windows(2, 1, 12.0);
  const auto va = synthetic_windows(3, 1, 8.0);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.max_lr = 0.05;
  cfg.seed = 17;
  const auto a = train(tiny_model(), cfg, tr, va);
  const auto b = train(tiny_model(), cfg, tr, va);
  CHECK(a.report.to_csv() == b.report.to_csv());
  CHECK(a.report.lr_trace == b.report.lr_trace);
  CHECK(a.report.lr_trace.size() == 4 * ((tr.size() + 7) / 8));
  CHECK(a.report.to_csv().rfind("epoch,train_loss,val_loss,val_acc\n", 0) == 0);

  std::vector<double> losses;
  for (const auto& e : a.report.epochs) losses.push_back(e.val_loss);
  CHECK(a.report.best_epoch == best_epoch_index(losses));
  auto params = a.params.clone();
  const auto ev = evaluate_windows(params, va, 8);
  CHECK(std::abs(ev.loss - a.report.epochs[a.report.best_epoch].val_loss) <= 1e-9);
}

TEST_CASE("augmented batches keep every sample norm") {
  const auto tr = synthetic_windows(4, 1, 10.0);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 5;
  cfg.augment = true;
  std::size_t batches = 0;
  double worst = 0.0;
  bool rotated = false;
  train(tiny_model(), cfg, tr, tr, {}, [&](std::span<const std::size_t> idx, std::span<const Window> batch) {
    ++batches;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Window& orig = tr[idx[k]];
      for (std::size_t i = 0; i < orig.length; ++i) {
        worst = std::max(worst, std::abs(norm_at(orig, i) - norm_at(batch[k], i)));
      }
      if (batch[k].data != orig.data) rotated = true;
    }
  });
  CHECK(batches == 2 * ((tr.size() + 4) / 5));
  CHECK(worst <= 1e-9);
  CHECK(rotated);
}

TEST_CASE("plain descent on one batch lowers the loss") {
  auto windows = synthetic_windows(5, 1, 10.0);
  windows.resize(std::min<std::size_t>(windows.size(), 16));
  HarModelConfig mcfg;
  mcfg.seed = 1;
  auto params = build_model(mcfg);
  std::vector<ad::Tensor> tensors;
  for (auto& p : params.parameters()) tensors.push_back(p.tensor);
  std::vector<std::size_t> targets;
  for (const auto& w : windows) targets.push_back(index_of(*w.label));
  const auto batch = make_batch(windows);
  Sgd sgd;
  double prev = 1e300;
  for (int step = 0; step < 20; ++step) {
    ad::Tape tape;
    const auto ce = ad::softmax_cross_entropy(tape, forward_logits(tape, params, batch, ad::Mode::Train), targets);
    const double loss = ce.loss.item();
    CHECK(loss <= prev);
    prev = loss;
    params.zero_grad();
    ad::backward(tape, ce.loss);
    sgd.step(tensors, 1e-3);
  }
}

TEST_CASE("evaluation and prediction agree") {
  const auto ws = synthetic_windows(6, 1, 8.0);
  auto params = build_model(tiny_model());
  const auto ev = evaluate_windows(params, ws, 4);
  const auto probs = predict_windows(params, ws, 7);
  REQUIRE(ev.probs.size() == probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    for (std::size_t c = 0; c < kNumActivities; ++c) CHECK(std::abs(ev.probs[i][c] - probs[i][c]) <= 1e-12);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < ws.size(); ++i) loss -= std::log(probs[i][index_of(*ws[i].label)]);
  CHECK(std::abs(loss / static_cast<double>(ws.size()) - ev.loss) <= 1e-9);
}
