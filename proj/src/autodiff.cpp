#include "har/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "har/error.hpp"

namespace har::ad {

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void require_rank(const Tensor& t, std::size_t rank, const char* name) {
  require(t.defined() && t.rank() == rank,
          std::string(name) + " must have rank " + std::to_string(rank) +
              (t.defined() ? ", got " + shape_str(t.shape()) : ", got an undefined tensor"));
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  return std::any_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->requires_grad(); });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : d_(std::make_shared<Data>()) {
  for (std::size_t d : shape) require(d > 0, "tensor dimensions must be positive, got " + shape_str(shape));
  require(ad::numel(shape) == values.size(),
          "tensor of shape " + shape_str(shape) + " given " + std::to_string(values.size()) + " values");
  d_->shape = std::move(shape);
  d_->values = std::move(values);
  d_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

double Tensor::item() const {
  require(numel() == 1, "item() needs a single-element tensor, got " + shape_str(shape()));
  return d_->values[0];
}

std::span<double> Tensor::grad_buffer() const {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

Tensor Tensor::clone() const {
  if (!d_) return {};
  return Tensor(d_->shape, d_->values, d_->requires_grad);
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  nodes_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void backward(Tape& tape, const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, "backward needs a scalar loss");
  std::size_t end = tape.nodes_.size();
  while (end > 0 && !tape.nodes_[end - 1].output.is(loss)) --end;
  if (end == 0) {
    throw Error(ErrorCode::DetachedLoss, "loss tensor was not produced on this tape");
  }
  Tensor seed = loss;
  seed.grad_buffer()[0] = 1.0;
  for (std::size_t i = end; i-- > 0;) {
    auto& node = tape.nodes_[i];
    if (node.output.has_grad()) node.backward();
  }
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, const Conv1dOptions& opt) {
  const std::size_t span = opt.dilation * (kernel - 1) + 1;
  if (length + 2 * opt.padding < span) return 0;
  return (length + 2 * opt.padding - span) / opt.stride + 1;
}

namespace {

// C (M x N) += op(A) (M x K) * B (K x N), all row-major. With TransA the
// stored array is K x M.
template <bool TransA>
void gemm_acc(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
              const double* B, std::size_t ldb, double* C, std::size_t ldc) {
  constexpr std::size_t kBlock = 256;
  auto a_at = [&](std::size_t i, std::size_t k) { return TransA ? A[k * lda + i] : A[i * lda + k]; };
  for (std::size_t k0 = 0; k0 < K; k0 += kBlock) {
    const std::size_t k1 = std::min(K, k0 + kBlock);
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) {
      double* __restrict c0 = C + i * ldc;
      double* __restrict c1 = c0 + ldc;
      double* __restrict c2 = c1 + ldc;
      double* __restrict c3 = c2 + ldc;
      for (std::size_t k = k0; k < k1; ++k) {
        const double a0 = a_at(i, k), a1 = a_at(i + 1, k), a2 = a_at(i + 2, k), a3 = a_at(i + 3, k);
        const double* __restrict b = B + k * ldb;
        for (std::size_t j = 0; j < N; ++j) {
          const double bj = b[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    }
    for (; i < M; ++i) {
      double* __restrict c = C + i * ldc;
      for (std::size_t k = k0; k < k1; ++k) {
        const double a = a_at(i, k);
        const double* __restrict b = B + k * ldb;
        for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
      }
    }
  }
}

struct ConvGeometry {
  std::size_t N, Ci, L, Co, K, Lo, s;
  std::ptrdiff_t pad, dil;
  std::size_t cols() const { return Ci * K; }
  std::size_t rows() const { return N * Lo; }
};

// Row (n, i) holds the receptive field of output position i of sample n,
// column (c, j) the input x[n, c, i*s + j*d - p] (zero outside).
std::vector<double> im2row(const ConvGeometry& g, const double* xv) {
  std::vector<double> out(g.rows() * g.cols(), 0.0);
  for (std::size_t n = 0; n < g.N; ++n) {
    for (std::size_t i = 0; i < g.Lo; ++i) {
      double* row = out.data() + (n * g.Lo + i) * g.cols();
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(i * g.s) - g.pad;
      for (std::size_t c = 0; c < g.Ci; ++c) {
        const double* xrow = xv + (n * g.Ci + c) * g.L;
        for (std::size_t j = 0; j < g.K; ++j) {
          const std::ptrdiff_t t = base + static_cast<std::ptrdiff_t>(j) * g.dil;
          if (t >= 0 && t < static_cast<std::ptrdiff_t>(g.L)) row[c * g.K + j] = xrow[t];
        }
      }
    }
  }
  return out;
}

void row2im_acc(const ConvGeometry& g, const std::vector<double>& rows, double* gx) {
  for (std::size_t n = 0; n < g.N; ++n) {
    for (std::size_t i = 0; i < g.Lo; ++i) {
      const double* row = rows.data() + (n * g.Lo + i) * g.cols();
      const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(i * g.s) - g.pad;
      for (std::size_t c = 0; c < g.Ci; ++c) {
        double* gxrow = gx + (n * g.Ci + c) * g.L;
        for (std::size_t j = 0; j < g.K; ++j) {
          const std::ptrdiff_t t = base + static_cast<std::ptrdiff_t>(j) * g.dil;
          if (t >= 0 && t < static_cast<std::ptrdiff_t>(g.L)) gxrow[t] += row[c * g.K + j];
        }
      }
    }
  }
}

}  // namespace

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              const Conv1dOptions& opt) {
  require_rank(x, 3, "conv1d input");
  require_rank(w, 3, "conv1d weight");
  require_rank(b, 1, "conv1d bias");
  const std::size_t N = x.dim(0), Ci = x.dim(1), L = x.dim(2);
  const std::size_t Co = w.dim(0), K = w.dim(2);
  require(w.dim(1) == Ci, "conv1d weight expects " + std::to_string(w.dim(1)) +
                              " input channels, input has " + std::to_string(Ci));
  require(b.dim(0) == Co, "conv1d bias length must equal output channels");
  require(K % 2 == 1, "conv1d kernel size must be odd");
  require(opt.stride >= 1 && opt.dilation >= 1, "conv1d stride and dilation must be >= 1");
  require(L + 2 * opt.padding >= opt.dilation * (K - 1) + 1,
          "conv1d input too short for the dilated kernel");
  const ConvGeometry g{N, Ci, L, Co, K, conv1d_output_length(L, K, opt), opt.stride,
                       static_cast<std::ptrdiff_t>(opt.padding), static_cast<std::ptrdiff_t>(opt.dilation)};
  const std::size_t CK = g.cols(), R = g.rows(), Lo = g.Lo;

  Tensor out = Tensor::zeros({N, Co, Lo});
  {
    const auto xr = im2row(g, x.values().data());
    const auto wv = w.values();
    std::vector<double> wt(CK * Co);  // W^T, (Ci*K) x Co
    for (std::size_t o = 0; o < Co; ++o) {
      for (std::size_t r = 0; r < CK; ++r) wt[r * Co + o] = wv[o * CK + r];
    }
    std::vector<double> yt(R * Co, 0.0);  // (N*Lo) x Co
    gemm_acc<false>(R, Co, CK, xr.data(), CK, wt.data(), Co, yt.data(), Co);
    const auto bv = b.values();
    auto ov = out.values();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < Co; ++o) {
        double* orow = ov.data() + (n * Co + o) * Lo;
        for (std::size_t i = 0; i < Lo; ++i) orow[i] = bv[o] + yt[(n * Lo + i) * Co + o];
      }
    }
  }

  if (any_requires_grad({&x, &w, &b})) {
    out.set_requires_grad(true);
    tape.record({x, w, b}, out, [x, w, b, out, g]() {
      const std::size_t CK = g.cols(), R = g.rows(), Lo = g.Lo, Co = g.Co;
      const double* gv = out.grad().data();
      // Gradient transposed to (N*Lo) x Co.
      std::vector<double> gt(R * Co);
      for (std::size_t n = 0; n < g.N; ++n) {
        for (std::size_t o = 0; o < Co; ++o) {
          const double* grow = gv + (n * Co + o) * Lo;
          for (std::size_t i = 0; i < Lo; ++i) gt[(n * Lo + i) * Co + o] = grow[i];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t r = 0; r < R; ++r) {
          for (std::size_t o = 0; o < Co; ++o) gb[o] += gt[r * Co + o];
        }
      }
      if (w.requires_grad()) {
        const auto xr = im2row(g, x.values().data());
        std::vector<double> gwt(CK * Co, 0.0);  // (Ci*K) x Co
        gemm_acc<true>(CK, Co, R, xr.data(), CK, gt.data(), Co, gwt.data(), Co);
        auto gw = w.grad_buffer();
        for (std::size_t o = 0; o < Co; ++o) {
          for (std::size_t r = 0; r < CK; ++r) gw[o * CK + r] += gwt[r * Co + o];
        }
      }
      if (x.requires_grad()) {
        std::vector<double> gxr(R * CK, 0.0);
        gemm_acc<false>(R, CK, Co, gt.data(), Co, w.values().data(), CK, gxr.data(), CK);
        row2im_acc(g, gxr, x.grad_buffer().data());
      }
    });
  }
  return out;
}

Tensor batch_norm1d(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& state, Mode mode, double eps, double momentum) {
  require_rank(x, 3, "batch_norm1d input");
  require_rank(gamma, 1, "batch_norm1d gamma");
  require_rank(beta, 1, "batch_norm1d beta");
  const std::size_t N = x.dim(0), C = x.dim(1), L = x.dim(2);
  require(gamma.dim(0) == C && beta.dim(0) == C, "batch_norm1d affine length must equal channels");
  require(state.running_mean.size() == C && state.running_var.size() == C,
          "batch_norm1d running statistics length must equal channels");
  const std::size_t count = N * L;
  if (mode == Mode::Train && count < 2) {
    throw Error(ErrorCode::DegenerateBatch, "batch_norm1d in Train mode needs N*L >= 2");
  }

  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(C);
  Tensor out = Tensor::zeros(x.shape());
  const double* xv = x.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();
  double* ov = out.values().data();

  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* row = xv + (n * C + c) * L;
        for (std::size_t i = 0; i < L; ++i) acc += row[i];
      }
      mean = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* row = xv + (n * C + c) * L;
        for (std::size_t i = 0; i < L; ++i) sq += (row[i] - mean) * (row[i] - mean);
      }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = istd;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t base = (n * C + c) * L;
      for (std::size_t i = 0; i < L; ++i) {
        const double h = (xv[base + i] - mean) * istd;
        (*xhat)[base + i] = h;
        ov[base + i] = gv[c] * h + bv[c];
      }
    }
  }

  if (any_requires_grad({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape.record({x, gamma, beta}, out, [x, gamma, beta, out, xhat, inv_std, N, C, L, count, mode]() mutable {
      const double* g = out.grad().data();
      const double* gam = gamma.values().data();
      double* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      double* ggamma = gamma.requires_grad() ? gamma.grad_buffer().data() : nullptr;
      double* gbeta = beta.requires_grad() ? beta.grad_buffer().data() : nullptr;
      const double m = static_cast<double>(count);
      for (std::size_t c = 0; c < C; ++c) {
        double sum_g = 0.0, sum_gh = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * L;
          for (std::size_t i = 0; i < L; ++i) {
            sum_g += g[base + i];
            sum_gh += g[base + i] * (*xhat)[base + i];
          }
        }
        if (ggamma) ggamma[c] += sum_gh;
        if (gbeta) gbeta[c] += sum_g;
        if (!gx) continue;
        const double scale = gam[c] * (*inv_std)[c];
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * L;
          for (std::size_t i = 0; i < L; ++i) {
            if (mode == Mode::Train) {
              gx[base + i] += scale * (g[base + i] - sum_g / m - (*xhat)[base + i] * sum_gh / m);
            } else {
              gx[base + i] += scale * g[base + i];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  require(x.defined(), "relu input undefined");
  Tensor out = Tensor::zeros(x.shape());
  const auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (x.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out]() mutable {
      const auto g = out.grad();
      const auto xv = x.values();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.defined() && b.defined() && a.shape() == b.shape(),
          "add needs equal shapes");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.values();
  const auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] + bv[i];
  if (any_requires_grad({&a, &b})) {
    out.set_requires_grad(true);
    tape.record({a, b}, out, [a, b, out]() mutable {
      const auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor avg_pool1d(Tape& tape, const Tensor& x, std::size_t kernel, std::size_t stride) {
  require_rank(x, 3, "avg_pool1d input");
  const std::size_t N = x.dim(0), C = x.dim(1), L = x.dim(2);
  require(kernel >= 1 && stride >= 1 && kernel <= L, "avg_pool1d needs 1 <= kernel <= L and stride >= 1");
  const std::size_t Lo = (L - kernel) / stride + 1;
  const double inv = 1.0 / static_cast<double>(kernel);
  Tensor out = Tensor::zeros({N, C, Lo});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (std::size_t r = 0; r < N * C; ++r) {
    for (std::size_t i = 0; i < Lo; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kernel; ++j) acc += xv[r * L + i * stride + j];
      ov[r * Lo + i] = acc * inv;
    }
  }
  if (x.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out, N, C, L, Lo, kernel, stride, inv]() mutable {
      const double* g = out.grad().data();
      double* gx = x.grad_buffer().data();
      for (std::size_t r = 0; r < N * C; ++r) {
        for (std::size_t i = 0; i < Lo; ++i) {
          const double share = g[r * Lo + i] * inv;
          for (std::size_t j = 0; j < kernel; ++j) gx[r * L + i * stride + j] += share;
        }
      }
    });
  }
  return out;
}

Tensor flatten(Tape& tape, const Tensor& x) {
  require(x.defined() && x.rank() >= 2, "flatten needs rank >= 2");
  const std::size_t N = x.dim(0);
  Tensor out({N, x.numel() / N}, std::vector<double>(x.values().begin(), x.values().end()));
  if (x.requires_grad()) {
    out.set_requires_grad(true);
    tape.record({x}, out, [x, out]() mutable {
      const auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor affine(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "affine input");
  require_rank(w, 2, "affine weight");
  require_rank(b, 1, "affine bias");
  const std::size_t N = x.dim(0), F = x.dim(1), O = w.dim(0);
  require(w.dim(1) == F, "affine weight expects " + std::to_string(w.dim(1)) + " features, input has " +
                             std::to_string(F));
  require(b.dim(0) == O, "affine bias length must equal output features");
  Tensor out = Tensor::zeros({N, O});
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      double acc = bv[o];
      for (std::size_t f = 0; f < F; ++f) acc += xv[n * F + f] * wv[o * F + f];
      ov[n * O + o] = acc;
    }
  }
  if (any_requires_grad({&x, &w, &b})) {
    out.set_requires_grad(true);
    tape.record({x, w, b}, out, [x, w, b, out, N, F, O]() mutable {
      const double* g = out.grad().data();
      const double* xv = x.values().data();
      const double* wv = w.values().data();
      double* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
      double* gw = w.requires_grad() ? w.grad_buffer().data() : nullptr;
      double* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
          const double go = g[n * O + o];
          if (gb) gb[o] += go;
          for (std::size_t f = 0; f < F; ++f) {
            if (gx) gx[n * F + f] += go * wv[o * F + f];
            if (gw) gw[o * F + f] += go * xv[n * F + f];
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 2, "softmax input");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  Tensor probs = Tensor::zeros({N, C});
  const double* lv = logits.values().data();
  double* pv = probs.values().data();
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = lv + n * C;
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      pv[n * C + c] = std::exp(row[c] - mx);
      z += pv[n * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) pv[n * C + c] /= z;
  }
  return probs;
}

CrossEntropyResult softmax_cross_entropy(Tape& tape, const Tensor& logits,
                                         std::span<const std::size_t> targets) {
  require_rank(logits, 2, "softmax_cross_entropy logits");
  const std::size_t N = logits.dim(0), C = logits.dim(1);
  require(targets.size() == N, "softmax_cross_entropy needs one target per row");
  for (std::size_t t : targets) {
    if (t >= C) {
      throw Error(ErrorCode::InvalidTarget,
                  "target " + std::to_string(t) + " outside [0, " + std::to_string(C) + ")");
    }
  }
  Tensor probs = softmax(logits);
  const double* lv = logits.values().data();
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    // log-sum-exp on the shifted row keeps -log p finite for confident rows.
    const double* row = lv + n * C;
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
    loss += std::log(z) + mx - row[targets[n]];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(N));
  if (logits.requires_grad()) {
    out.set_requires_grad(true);
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    tape.record({logits}, out, [logits, probs, out, tgt = std::move(tgt), N, C]() mutable {
      const double g = out.grad()[0] / static_cast<double>(N);
      const double* pv = probs.values().data();
      double* gl = logits.grad_buffer().data();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
          gl[n * C + c] += g * (pv[n * C + c] - (c == tgt[n] ? 1.0 : 0.0));
        }
      }
    });
  }
  return {out, probs};
}

Tensor sum(Tape& tape, const Tensor& x) {
  std::vector<double> ones(x.numel(), 1.0);
  return weighted_sum(tape, x, ones);
}

Tensor weighted_sum(Tape& tape, const Tensor& x, std::span<const double> weights) {
  require(x.defined() && weights.size() == x.numel(), "weighted_sum needs one weight per element");
  double acc = 0.0;
  const auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) acc += weights[i] * xv[i];
  Tensor out = Tensor::scalar(acc);
  if (x.requires_grad()) {
    out.set_requires_grad(true);
    std::vector<double> wcopy(weights.begin(), weights.end());
    tape.record({x}, out, [x, out, wcopy = std::move(wcopy)]() mutable {
      const double g = out.grad()[0];
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * wcopy[i];
    });
  }
  return out;
}

}  // namespace har::ad
