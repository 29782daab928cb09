#include "har/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "har/csv.hpp"
#include "har/error.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

double cosine_anneal(double from, double to, double pct) {
  return to + (from - to) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<std::size_t> targets_of(std::span<const Window> windows, std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(index_of(*windows[i].label));
  return out;
}

void require_labeled(std::span<const Window> windows, const char* what) {
  if (windows.empty()) throw Error(ErrorCode::EmptyDataset, std::string(what) + " set is empty");
  for (const auto& w : windows) {
    if (!w.label) {
      throw Error(ErrorCode::EmptyDataset,
                  std::string(what) + " set contains an unlabeled window from " + w.recording_id);
    }
  }
}

std::vector<ad::Tensor> parameter_tensors(const ModelParams& params) {
  std::vector<ad::Tensor> out;
  for (auto& p : params.parameters()) out.push_back(p.tensor);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(max_lr > 0.0)) fail("max_lr must be positive");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) fail("warmup_fraction must be in (0, 1)");
  if (!(div_factor > 0.0) || !(final_div_factor > 0.0)) fail("div factors must be positive");
  if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
  if (weight_decay < 0.0) fail("weight_decay must be non-negative");
}

std::size_t one_cycle_peak_step(std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0) return 0;
  const auto peak = static_cast<std::size_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));
  return std::min(peak, total_steps - 1);
}

double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (step >= total_steps) {
    throw Error(ErrorCode::StepOutOfRange, "step " + std::to_string(step) + " outside [0, " +
                                               std::to_string(total_steps) + ")");
  }
  const double initial = cfg.max_lr / cfg.div_factor;
  const double final_lr = initial / cfg.final_div_factor;
  const std::size_t peak = one_cycle_peak_step(total_steps, cfg);
  if (step <= peak) {
    const double pct = peak == 0 ? 1.0 : static_cast<double>(step) / static_cast<double>(peak);
    return cosine_anneal(initial, cfg.max_lr, pct);
  }
  const double pct = static_cast<double>(step - peak) / static_cast<double>(total_steps - 1 - peak);
  return cosine_anneal(cfg.max_lr, final_lr, pct);
}

void Sgd::step(std::span<ad::Tensor> params, double lr) {
  for (const auto& p : params) {
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
    }
  }
  if (velocity_.size() != params.size()) velocity_.assign(params.size(), {});
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values();
    const auto grad = params[k].grad();
    auto& vel = velocity_[k];
    if (momentum_ != 0.0 && vel.size() != values.size()) vel.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      double g = grad.empty() ? 0.0 : grad[i];
      if (weight_decay_ != 0.0) g += weight_decay_ * values[i];
      if (momentum_ != 0.0) {
        vel[i] = momentum_ * vel[i] + g;
        g = vel[i];
      }
      values[i] -= lr * g;
    }
  }
}

std::string TrainReport::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    out += std::to_string(e) + ',' + csv::format(epochs[e].train_loss) + ',' +
           csv::format(epochs[e].val_loss) + ',' + csv::format(epochs[e].val_accuracy) + '\n';
  }
  return out;
}

std::size_t best_epoch_index(std::span<const double> val_losses) {
  if (val_losses.empty()) throw Error(ErrorCode::EmptyDataset, "no validation losses");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < val_losses[best]) best = i;
  }
  return best;
}

std::vector<std::array<double, kNumActivities>> predict_windows(ModelParams& params,
                                                                std::span<const Window> windows,
                                                                std::size_t batch_size) {
  std::vector<std::array<double, kNumActivities>> out;
  out.reserve(windows.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ad::Tensor probs = forward(params, make_batch(windows, idx), ad::Mode::Eval);
    if (probs.dim(1) != kNumActivities) {
      throw Error(ErrorCode::InvalidConfig, "model head does not produce six activity scores");
    }
    const auto pv = probs.values();
    for (std::size_t n = 0; n < idx.size(); ++n) {
      std::array<double, kNumActivities> row{};
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(n * kNumActivities), kNumActivities, row.begin());
      out.push_back(row);
    }
  }
  return out;
}

Evaluation evaluate_windows(ModelParams& params, std::span<const Window> windows,
                            std::size_t batch_size) {
  require_labeled(windows, "evaluation");
  Evaluation ev;
  double loss = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    const ad::Tensor logits = forward_logits(tape, params, make_batch(windows, idx), ad::Mode::Eval);
    const auto targets = targets_of(windows, idx);
    const auto ce = ad::softmax_cross_entropy(tape, logits, targets);
    loss += ce.loss.item() * static_cast<double>(idx.size());
    const std::size_t C = ce.probs.dim(1);
    const auto pv = ce.probs.values();
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const auto row = pv.subspan(n * C, C);
      if (argmax(row) == targets[n]) ++correct;
      std::array<double, kNumActivities> p{};
      std::copy_n(row.begin(), std::min(C, kNumActivities), p.begin());
      ev.probs.push_back(p);
    }
  }
  ev.loss = loss / static_cast<double>(windows.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(windows.size());
  return ev;
}

TrainResult train(const HarModelConfig& model_cfg, const TrainConfig& train_cfg,
                  std::span<const Window> train_windows, std::span<const Window> val_windows,
                  const EpochCallback& on_epoch, const BatchCallback& on_batch) {
  model_cfg.validate();
  train_cfg.validate();
  require_labeled(train_windows, "training");
  require_labeled(val_windows, "validation");

  ModelParams params = build_model(model_cfg);
  std::vector<ad::Tensor> tensors = parameter_tensors(params);
  Sgd optimizer(train_cfg.momentum, train_cfg.weight_decay);
  Rng rng(train_cfg.seed);

  const std::size_t n = train_windows.size();
  const auto bs = static_cast<std::size_t>(train_cfg.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(train_cfg.epochs);

  TrainResult result;
  result.report.lr_trace.reserve(total_steps);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Window> batch_windows;
  std::size_t step = 0;
  double best_loss = 0.0;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += bs, ++step) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      batch_windows.clear();
      for (std::size_t i : idx) {
        batch_windows.push_back(train_cfg.augment
                                    ? apply_rotation(train_windows[i], sample_rotation(rng))
                                    : train_windows[i]);
      }
      if (on_batch) on_batch(idx, batch_windows);
      const auto targets = targets_of(train_windows, idx);

      ad::Tape tape;
      const ad::Tensor logits =
          forward_logits(tape, params, make_batch(batch_windows), ad::Mode::Train);
      const auto ce = ad::softmax_cross_entropy(tape, logits, targets);
      const double loss = ce.loss.item();
      if (!std::isfinite(loss)) {
        throw Error(ErrorCode::NonFiniteLoss, "loss became non-finite at epoch " +
                                                  std::to_string(epoch) + ", step " +
                                                  std::to_string(step));
      }
      params.zero_grad();
      ad::backward(tape, ce.loss);
      const double lr = one_cycle_lr(step, total_steps, train_cfg);
      optimizer.step(tensors, lr);
      result.report.lr_trace.push_back(lr);

      loss_sum += loss * static_cast<double>(idx.size());
      const std::size_t C = ce.probs.dim(1);
      const auto pv = ce.probs.values();
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (argmax(pv.subspan(k * C, C)) == targets[k]) ++correct;
      }
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    const Evaluation val = evaluate_windows(params, val_windows, bs);
    stats.val_loss = val.loss;
    stats.val_accuracy = val.accuracy;
    result.report.epochs.push_back(stats);
    if (epoch == 0 || stats.val_loss < best_loss) {
      best_loss = stats.val_loss;
      result.report.best_epoch = static_cast<std::size_t>(epoch);
      result.params = params.clone();
    }
    if (on_epoch) on_epoch(static_cast<std::size_t>(epoch), stats);
  }
  params.zero_grad();
  return result;
}

}  // namespace har
