#include "har/model.hpp"

#include <cmath>

#include "har/error.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

using ad::Tensor;

ConvParams make_conv(std::size_t out, std::size_t in, std::size_t k, std::size_t dilation, Rng& rng) {
  // Kaiming normal, fan-out mode, ReLU gain sqrt(2).
  const double sd = std::sqrt(2.0 / static_cast<double>(out * k));
  std::vector<double> w(out * in * k);
  for (double& v : w) v = rng.normal(0.0, sd);
  return {Tensor({out, in, k}, std::move(w), true), Tensor::zeros({out}, true), dilation,
          dilation * (k - 1) / 2};
}

BatchNormParams make_bn(std::size_t channels) {
  return {Tensor({channels}, std::vector<double>(channels, 1.0), true), Tensor::zeros({channels}, true),
          ad::BatchNormState::fresh(channels)};
}

ConvParams clone_conv(const ConvParams& c) {
  return {c.weight.clone(), c.bias.clone(), c.dilation, c.padding};
}

BatchNormParams clone_bn(const BatchNormParams& b) {
  return {b.gamma.clone(), b.beta.clone(), b.state};
}

void push_conv(std::vector<NamedTensor>& out, const std::string& prefix, const ConvParams& c) {
  out.push_back({prefix + ".weight", c.weight});
  out.push_back({prefix + ".bias", c.bias});
}

void push_bn(std::vector<NamedTensor>& out, const std::string& prefix, const BatchNormParams& b) {
  out.push_back({prefix + ".gamma", b.gamma});
  out.push_back({prefix + ".beta", b.beta});
}

template <typename Buffer, typename Bn>
void push_state(std::vector<Buffer>& out, const std::string& prefix, Bn& b) {
  out.push_back({prefix + ".running_mean", &b.state.running_mean});
  out.push_back({prefix + ".running_var", &b.state.running_var});
}

Tensor conv(ad::Tape& tape, const Tensor& x, const ConvParams& c) {
  return ad::conv1d(tape, x, c.weight, c.bias, {1, c.padding, c.dilation});
}

Tensor bn(ad::Tape& tape, const Tensor& x, BatchNormParams& b, ad::Mode mode) {
  return ad::batch_norm1d(tape, x, b.gamma, b.beta, b.state, mode);
}

}  // namespace

std::size_t HarModelConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_seconds * target_hz));
}

void HarModelConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (in_channels < 1) fail("in_channels must be positive");
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be a positive odd number");
  if (block_widths.size() != 3 || block_dilations.size() != 3) {
    fail("exactly three block widths and three block dilations are required");
  }
  for (int w : block_widths) {
    if (w < 1) fail("block widths must be positive");
  }
  for (int d : block_dilations) {
    if (d < 1) fail("block dilations must be >= 1");
  }
  if (!(window_seconds > 0.0) || !(target_hz > 0.0)) fail("window length and rate must be positive");
  const double exact = window_seconds * target_hz;
  if (std::abs(exact - std::round(exact)) > 1e-9 * std::max(1.0, exact)) {
    fail("window_seconds * target_hz must be a whole number of samples");
  }
  // Each block halves the length; the last pooled length must stay >= 1.
  if (window_samples() < 8) fail("window must hold at least 8 samples");
}

void HarModelConfig::require_activity_head() const {
  if (num_classes != static_cast<int>(kNumActivities)) {
    throw Error(ErrorCode::InvalidConfig, "model predicts " + std::to_string(num_classes) +
                                              " classes; the activity pipeline needs " +
                                              std::to_string(kNumActivities));
  }
}

ModelParams build_model(const HarModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const auto k = static_cast<std::size_t>(config.kernel);
  ModelParams p;
  const auto w0 = static_cast<std::size_t>(config.block_widths[0]);
  p.stem_conv = make_conv(w0, static_cast<std::size_t>(config.in_channels), k, 1, rng);
  p.stem_bn = make_bn(w0);
  std::size_t in = w0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto width = static_cast<std::size_t>(config.block_widths[i]);
    const auto dil = static_cast<std::size_t>(config.block_dilations[i]);
    BasicBlockParams b;
    b.conv1 = make_conv(width, in, k, dil, rng);
    b.bn1 = make_bn(width);
    b.conv2 = make_conv(width, width, k, dil, rng);
    b.bn2 = make_bn(width);
    if (width != in) {
      b.proj_conv = make_conv(width, in, 1, 1, rng);
      b.proj_bn = make_bn(width);
    }
    p.blocks.push_back(std::move(b));
    in = width;
  }
  const auto classes = static_cast<std::size_t>(config.num_classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> head(classes * in);
  for (double& v : head) v = rng.uniform(-bound, bound);
  p.head_weight = Tensor({classes, in}, std::move(head), true);
  p.head_bias = Tensor::zeros({classes}, true);
  p.input_length = config.window_samples();
  return p;
}

std::vector<NamedTensor> ModelParams::parameters() const {
  std::vector<NamedTensor> out;
  push_conv(out, "stem.conv", stem_conv);
  push_bn(out, "stem.bn", stem_bn);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i);
    const auto& b = blocks[i];
    push_conv(out, pre + ".conv1", b.conv1);
    push_bn(out, pre + ".bn1", b.bn1);
    push_conv(out, pre + ".conv2", b.conv2);
    push_bn(out, pre + ".bn2", b.bn2);
    if (b.proj_conv) {
      push_conv(out, pre + ".proj.conv", *b.proj_conv);
      push_bn(out, pre + ".proj.bn", *b.proj_bn);
    }
  }
  out.push_back({"head.weight", head_weight});
  out.push_back({"head.bias", head_bias});
  return out;
}

namespace {

template <typename Buffer, typename Params>
std::vector<Buffer> collect_buffers(Params& p) {
  std::vector<Buffer> out;
  push_state(out, "stem.bn", p.stem_bn);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string pre = "blocks." + std::to_string(i);
    auto& b = p.blocks[i];
    push_state(out, pre + ".bn1", b.bn1);
    push_state(out, pre + ".bn2", b.bn2);
    if (b.proj_bn) push_state(out, pre + ".proj.bn", *b.proj_bn);
  }
  return out;
}

}  // namespace

std::vector<NamedBuffer> ModelParams::buffers() const { return collect_buffers<NamedBuffer>(*this); }

std::vector<MutableNamedBuffer> ModelParams::mutable_buffers() {
  return collect_buffers<MutableNamedBuffer>(*this);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.stem_conv = clone_conv(stem_conv);
  out.stem_bn = clone_bn(stem_bn);
  for (const auto& b : blocks) {
    BasicBlockParams c;
    c.conv1 = clone_conv(b.conv1);
    c.bn1 = clone_bn(b.bn1);
    c.conv2 = clone_conv(b.conv2);
    c.bn2 = clone_bn(b.bn2);
    if (b.proj_conv) {
      c.proj_conv = clone_conv(*b.proj_conv);
      c.proj_bn = clone_bn(*b.proj_bn);
    }
    out.blocks.push_back(std::move(c));
  }
  out.head_weight = head_weight.clone();
  out.head_bias = head_bias.clone();
  out.input_length = input_length;
  return out;
}

void ModelParams::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

ad::Tensor forward_logits(ad::Tape& tape, ModelParams& params, const ad::Tensor& batch,
                          ad::Mode mode) {
  if (!batch.defined() || batch.rank() != 3 || batch.dim(1) != params.stem_conv.weight.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "model input must be (N, channels, L)");
  }
  if (params.input_length != 0 && batch.dim(2) != params.input_length) {
    throw Error(ErrorCode::ShapeMismatch, "model expects windows of " +
                                              std::to_string(params.input_length) + " samples, got " +
                                              std::to_string(batch.dim(2)));
  }
  Tensor h = ad::relu(tape, bn(tape, conv(tape, batch, params.stem_conv), params.stem_bn, mode));
  for (auto& block : params.blocks) {
    Tensor y = ad::relu(tape, bn(tape, conv(tape, h, block.conv1), block.bn1, mode));
    y = bn(tape, conv(tape, y, block.conv2), block.bn2, mode);
    Tensor skip = block.proj_conv ? bn(tape, conv(tape, h, *block.proj_conv), *block.proj_bn, mode) : h;
    h = ad::relu(tape, ad::add(tape, y, skip));
    if (h.dim(2) < 2) throw Error(ErrorCode::ShapeMismatch, "window too short for the pooling schedule");
    h = ad::avg_pool1d(tape, h, 2, 2);
  }
  h = ad::avg_pool1d(tape, h, h.dim(2), h.dim(2));
  return ad::affine(tape, ad::flatten(tape, h), params.head_weight, params.head_bias);
}

ad::Tensor forward(ModelParams& params, const ad::Tensor& batch, ad::Mode mode) {
  ad::Tape tape;
  return ad::softmax(forward_logits(tape, params, batch, mode));
}

ad::Tensor make_batch(std::span<const Window> windows, std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::ShapeMismatch, "cannot batch zero windows");
  const std::size_t L = windows[indices[0]].length;
  std::vector<double> data;
  data.reserve(indices.size() * 3 * L);
  for (std::size_t i : indices) {
    const Window& w = windows[i];
    if (w.length != L || w.data.size() != 3 * L) {
      throw Error(ErrorCode::ShapeMismatch, "windows in a batch must share one 3 x L shape");
    }
    data.insert(data.end(), w.data.begin(), w.data.end());
  }
  return ad::Tensor({indices.size(), 3, L}, std::move(data));
}

ad::Tensor make_batch(std::span<const Window> windows) {
  std::vector<std::size_t> idx(windows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(windows, idx);
}

}  // namespace har
