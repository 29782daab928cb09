#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "har/autodiff.hpp"
#include "har/signal.hpp"

namespace har {

struct HarModelConfig {
  int in_channels = 3;
  int num_classes = 6;
  double window_seconds = 6.0;
  double target_hz = 20.0;
  int kernel = 3;
  std::vector<int> block_widths = {32, 64, 128};
  std::vector<int> block_dilations = {1, 2, 4};
  std::uint64_t seed = 0;

  std::size_t window_samples() const;
  // Throws InvalidConfig.
  void validate() const;
  // Throws InvalidConfig unless num_classes matches the six-activity set.
  void require_activity_head() const;

  bool operator==(const HarModelConfig&) const = default;
};

struct ConvParams {
  ad::Tensor weight;  // (out, in, k)
  ad::Tensor bias;    // (out)
  std::size_t dilation = 1;
  std::size_t padding = 0;
};

struct BatchNormParams {
  ad::Tensor gamma;
  ad::Tensor beta;
  ad::BatchNormState state;
};

// conv -> BN -> ReLU -> conv -> BN, plus the (optionally projected) skip,
// then ReLU.
struct BasicBlockParams {
  ConvParams conv1;
  BatchNormParams bn1;
  ConvParams conv2;
  BatchNormParams bn2;
  std::optional<ConvParams> proj_conv;  // 1x1, present when the width changes
  std::optional<BatchNormParams> proj_bn;
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

template <typename Values>
struct BasicNamedBuffer {
  std::string name;
  Values* values;
};
using NamedBuffer = BasicNamedBuffer<const std::vector<double>>;
using MutableNamedBuffer = BasicNamedBuffer<std::vector<double>>;

struct ModelParams {
  ConvParams stem_conv;
  BatchNormParams stem_bn;
  std::vector<BasicBlockParams> blocks;
  ad::Tensor head_weight;  // (classes, width)
  ad::Tensor head_bias;
  std::size_t input_length = 0;  // L the model was configured for

  // Learnable tensors in a fixed order: stem, blocks, head.
  std::vector<NamedTensor> parameters() const;
  // Batch-norm running statistics in the same order.
  std::vector<NamedBuffer> buffers() const;
  std::vector<MutableNamedBuffer> mutable_buffers();
  std::size_t parameter_count() const;

  // Deep copy; the clone shares no storage with *this.
  ModelParams clone() const;
  void zero_grad();
};

// 3 -> w1 stem, three dilated BasicBlocks each followed by avg_pool(2,2)
// (the last one by global average pooling), then an affine head.
// Kaiming-normal (fan-out) conv weights, zero biases, BN gamma 1 / beta 0,
// running stats 0 / 1. Deterministic in config.seed.
ModelParams build_model(const HarModelConfig& config);

// Raw head scores (N, classes). Train mode normalizes by batch statistics and
// updates the running estimates; Eval mode reads them only.
ad::Tensor forward_logits(ad::Tape& tape, ModelParams& params, const ad::Tensor& batch,
                          ad::Mode mode);

// Softmax probabilities (N, classes). Eval mode does not mutate `params`.
ad::Tensor forward(ModelParams& params, const ad::Tensor& batch, ad::Mode mode);

// Stacks windows (3 x L each) into an (N, 3, L) tensor.
ad::Tensor make_batch(std::span<const Window> windows, std::span<const std::size_t> indices);
ad::Tensor make_batch(std::span<const Window> windows);

// Checkpoint container (little-endian):
//   "HARCKPT\0" | u32 version | u32 config length | config text (key=value\n)
//   | u32 record count | records | u64 FNV-1a of everything before it
// record: u16 name length | name | u8 rank | u32 dims[rank] | f32 values[]
void save_checkpoint(const ModelParams& params, const HarModelConfig& config,
                     const std::filesystem::path& path);
std::string encode_checkpoint(const ModelParams& params, const HarModelConfig& config);

struct LoadedModel {
  ModelParams params;
  HarModelConfig config;
};

// Throws CorruptCheckpoint on magic, version, layout, shape or digest errors.
LoadedModel load_checkpoint(const std::filesystem::path& path);
LoadedModel decode_checkpoint(std::string_view bytes);

}  // namespace har
