#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

// Minimal reverse-mode differentiation over dense row-major double arrays.
//
// Operators are free functions that take the Tape they record onto. An
// operator records a node only when at least one input requires a gradient;
// with no differentiable inputs it is a plain forward computation.
namespace har::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t numel() const { return d_->values.size(); }

  std::span<double> values() { return d_->values; }
  std::span<const double> values() const { return d_->values; }
  double item() const;

  bool requires_grad() const noexcept { return d_ && d_->requires_grad; }
  void set_requires_grad(bool on) { d_->requires_grad = on; }

  // Empty until a backward pass reaches this tensor.
  bool has_grad() const noexcept { return d_ && !d_->grad.empty(); }
  std::span<const double> grad() const { return d_->grad; }
  // Grad buffer, zero-allocated on first use.
  std::span<double> grad_buffer() const;
  void zero_grad() const { d_->grad.clear(); }

  // Deep copy of shape, values and the requires_grad flag; no gradient.
  Tensor clone() const;

  bool is(const Tensor& other) const noexcept { return d_ == other.d_; }

 private:
  struct Data {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Data> d_;
};

// Execution-ordered record of differentiable operations.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;

  friend void backward(Tape& tape, const Tensor& loss);
};

// Seeds d(loss)/d(loss) = 1 and runs the recorded rules in exact reverse
// order, accumulating into every requires_grad tensor reached. Throws
// ShapeMismatch for a non-scalar loss and DetachedLoss when `loss` was not
// produced on this tape.
void backward(Tape& tape, const Tensor& loss);

enum class Mode { Train, Eval };

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, const Conv1dOptions& opt);

// Cross-correlation: out[n,o,i] = b[o] + sum_{c,j} w[o,c,j] * x[n,c,i*s + j*d - p]
// with zero padding. x (N,Cin,L), w (Cout,Cin,k) with k odd, b (Cout).
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              const Conv1dOptions& opt = {});

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  static BatchNormState fresh(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Per-channel normalization of x (N,C,L). Train mode normalizes by the batch
// mean and biased variance over N*L and updates `state` with momentum
// (unbiased variance); Eval mode uses `state` only. Throws DegenerateBatch
// when N*L < 2 in Train mode.
Tensor batch_norm1d(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, Mode mode, double eps = kBatchNormEps,
                    double momentum = kBatchNormMomentum);

// max(0, x); the subgradient at 0 is 0.
Tensor relu(Tape& tape, const Tensor& x);

// Elementwise sum of equal-shape tensors (residual connections).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);

// Mean over non-overlapping or strided windows along the last axis of (N,C,L).
Tensor avg_pool1d(Tape& tape, const Tensor& x, std::size_t kernel, std::size_t stride);

// (N, d1, d2, ...) -> (N, d1*d2*...)
Tensor flatten(Tape& tape, const Tensor& x);

// x (N,F) * W^T (F,O) + b (O)
Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

struct CrossEntropyResult {
  Tensor loss;   // scalar, mean over the batch
  Tensor probs;  // (N,C), not differentiable
};

// Max-shifted softmax plus mean negative log-likelihood. Throws InvalidTarget
// for a target outside [0, C).
CrossEntropyResult softmax_cross_entropy(Tape& tape, const Tensor& logits,
                                         std::span<const std::size_t> targets);

// Row-wise max-shifted softmax of (N,C) logits, no tape.
Tensor softmax(const Tensor& logits);

// Reductions to a scalar, used to build test losses.
Tensor sum(Tape& tape, const Tensor& x);
Tensor weighted_sum(Tape& tape, const Tensor& x, std::span<const double> weights);

}  // namespace har::ad
