#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "har/model.hpp"
#include "har/signal.hpp"

namespace har {

struct TrainConfig {
  int epochs = 350;
  int batch_size = 64;
  double max_lr = 0.001;
  double warmup_fraction = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  double momentum = 0.0;
  double weight_decay = 0.0;
  bool augment = true;
  std::uint64_t seed = 0;

  // Throws InvalidConfig.
  void validate() const;
};

// Cosine one-cycle schedule stepped once per batch. Rises from
// max_lr / div_factor at step 0 to max_lr at step round(warmup * total), then
// anneals to max_lr / div_factor / final_div_factor at the last step.
// Throws StepOutOfRange unless 0 <= step < total_steps.
double one_cycle_lr(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

// Index of the peak step for a run of `total_steps`.
std::size_t one_cycle_peak_step(std::size_t total_steps, const TrainConfig& cfg);

// Plain or heavy-ball SGD: v <- m v + g, p <- p - lr v (m = 0 gives p - lr g).
// A missing gradient counts as zero.
class Sgd {
 public:
  explicit Sgd(double momentum = 0.0, double weight_decay = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  // Throws NonFiniteGradient, leaving every parameter untouched, if any
  // gradient entry is NaN or infinite.
  void step(std::span<ad::Tensor> params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // running, Train-mode batches
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  std::vector<double> lr_trace;  // one entry per optimizer step

  // `epoch,train_loss,val_loss,val_acc`
  std::string to_csv() const;
};

// First index of the minimum; EmptyDataset for an empty list.
std::size_t best_epoch_index(std::span<const double> val_losses);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::array<double, kNumActivities>> probs;
};

// Eval-mode pass over labeled windows in fixed order.
Evaluation evaluate_windows(ModelParams& params, std::span<const Window> windows,
                            std::size_t batch_size = 64);

// Eval-mode class probabilities for arbitrary (possibly unlabeled) windows.
std::vector<std::array<double, kNumActivities>> predict_windows(ModelParams& params,
                                                                std::span<const Window> windows,
                                                                std::size_t batch_size = 64);

struct TrainResult {
  ModelParams params;  // snapshot at report.best_epoch
  TrainReport report;
};

using EpochCallback = std::function<void(std::size_t epoch, const EpochStats&)>;
// Sees each training batch after augmentation; `indices` point into the
// training windows.
using BatchCallback =
    std::function<void(std::span<const std::size_t> indices, std::span<const Window> batch)>;

// Seeded shuffle per epoch, optional per-window rotation, Train-mode forward,
// cross-entropy, backward and an SGD step at the one-cycle rate; validation in
// Eval mode after every epoch. Throws EmptyDataset for empty or unlabeled
// inputs and NonFiniteLoss if a batch loss diverges.
TrainResult train(const HarModelConfig& model_cfg, const TrainConfig& train_cfg,
                  std::span<const Window> train_windows, std::span<const Window> val_windows,
                  const EpochCallback& on_epoch = {}, const BatchCallback& on_batch = {});

}  // namespace har
