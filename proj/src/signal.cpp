#include "har/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "har/csv.hpp"
#include "har/error.hpp"

namespace har {

namespace {

void require_increasing(std::span<const double> t) {
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (!(t[i] > t[i - 1])) {
      throw Error(ErrorCode::NonMonotoneTime, "spline knots must be strictly increasing (index " +
                                                  std::to_string(i) + ")");
    }
  }
}

std::size_t whole_samples(double seconds, double hz, const char* what) {
  const double exact = seconds * hz;
  const double rounded = std::round(exact);
  if (!(rounded >= 1.0) || std::abs(exact - rounded) > 1e-9 * std::max(1.0, exact)) {
    throw Error(ErrorCode::InvalidConfig, std::string(what) + " of " + csv::format(seconds) +
                                              " s is not a whole number of samples at " +
                                              csv::format(hz) + " Hz");
  }
  return static_cast<std::size_t>(rounded);
}

}  // namespace

CubicSpline::CubicSpline(std::span<const double> t, std::span<const double> y)
    : t_(t.begin(), t.end()), y_(y.begin(), y.end()) {
  if (t.size() != y.size()) throw Error(ErrorCode::ShapeMismatch, "spline t/y length mismatch");
  if (t.size() < 4) {
    throw Error(ErrorCode::TooFewSamples,
                "not-a-knot spline needs at least 4 samples, got " + std::to_string(t.size()));
  }
  require_increasing(t);

  const std::size_t n = t_.size();
  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) h[i] = t_[i + 1] - t_[i];

  // Tridiagonal system in M[1..n-2]; the not-a-knot conditions eliminate M[0]
  // and M[n-1] into the first and last rows.
  const std::size_t m = n - 2;
  std::vector<double> a(m), b(m), c(m), r(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = k + 1;
    a[k] = h[i - 1];
    b[k] = 2.0 * (h[i - 1] + h[i]);
    c[k] = h[i];
    r[k] = 6.0 * ((y_[i + 1] - y_[i]) / h[i] - (y_[i] - y_[i - 1]) / h[i - 1]);
  }
  const double h0 = h[0], h1 = h[1];
  b[0] += h0 * (h0 + h1) / h1;
  c[0] -= h0 * h0 / h1;
  const double hl = h[n - 2], hp = h[n - 3];
  b[m - 1] += hl * (hp + hl) / hp;
  a[m - 1] -= hl * hl / hp;

  for (std::size_t k = 1; k < m; ++k) {
    const double w = a[k] / b[k - 1];
    b[k] -= w * c[k - 1];
    r[k] -= w * r[k - 1];
  }
  m_.assign(n, 0.0);
  m_[m] = r[m - 1] / b[m - 1];
  for (std::size_t k = m - 1; k-- > 0;) m_[k + 1] = (r[k] - c[k] * m_[k + 2]) / b[k];

  m_[0] = ((h0 + h1) * m_[1] - h0 * m_[2]) / h1;
  m_[n - 1] = ((hp + hl) * m_[n - 2] - hl * m_[n - 3]) / hp;
}

double CubicSpline::operator()(double x) const {
  const std::size_t n = t_.size();
  std::size_t i = hint_ < n - 1 ? hint_ : 0;
  if (!(t_[i] <= x && x <= t_[i + 1])) {
    const auto it = std::upper_bound(t_.begin(), t_.end(), x);
    const auto pos = static_cast<std::size_t>(it - t_.begin());
    i = pos == 0 ? 0 : std::min(pos - 1, n - 2);
    hint_ = i;
  }
  const double h = t_[i + 1] - t_[i];
  const double left = t_[i + 1] - x;
  const double right = x - t_[i];
  return m_[i] * left * left * left / (6.0 * h) + m_[i + 1] * right * right * right / (6.0 * h) +
         (y_[i] / h - m_[i] * h / 6.0) * left + (y_[i + 1] / h - m_[i + 1] * h / 6.0) * right;
}

std::size_t uniform_grid_size(double t0, double t_last, double rate_hz) {
  if (t_last < t0) return 0;
  return static_cast<std::size_t>(std::floor((t_last - t0) * rate_hz + 1e-9)) + 1;
}

UniformChannel resample_cubic(std::span<const double> t, std::span<const double> values,
                              double target_hz) {
  if (!(target_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "target rate must be positive");
  const CubicSpline spline(t, values);
  UniformChannel out{t.front(), target_hz, {}};
  const std::size_t count = uniform_grid_size(t.front(), t.back(), target_hz);
  out.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) out.values[k] = spline(std::min(out.time_at(k), t.back()));
  return out;
}

Recording resample_recording(const Recording& rec, double target_hz) {
  const std::size_t n = rec.samples.size();
  if (n < 4) {
    throw Error(ErrorCode::TooFewSamples,
                rec.recording_id + ": resampling needs at least 4 samples");
  }
  std::vector<double> t(n), axis[3];
  for (auto& a : axis) a.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = rec.samples[i].t;
    axis[0][i] = rec.samples[i].ax;
    axis[1][i] = rec.samples[i].ay;
    axis[2][i] = rec.samples[i].az;
  }
  UniformChannel ch[3] = {resample_cubic(t, axis[0], target_hz), resample_cubic(t, axis[1], target_hz),
                          resample_cubic(t, axis[2], target_hz)};

  Recording out;
  out.recording_id = rec.recording_id;
  out.subject_id = rec.subject_id;
  out.device_location = rec.device_location;
  out.sample_rate_hz = target_hz;
  const std::size_t count = ch[0].values.size();
  out.samples.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.samples[k] = {ch[0].time_at(k), ch[0].values[k], ch[1].values[k], ch[2].values[k]};
  }
  if (rec.labels) {
    std::vector<ActivityLabel> labels(count);
    std::size_t j = 0;
    for (std::size_t k = 0; k < count; ++k) {
      const double tk = out.samples[k].t;
      while (j + 1 < n && std::abs(t[j + 1] - tk) < std::abs(t[j] - tk)) ++j;
      labels[k] = (*rec.labels)[j];
    }
    out.labels = std::move(labels);
  }
  return out;
}

RotationMatrix RotationMatrix::from_angles(double alpha, double beta, double gamma) {
  const double ca = std::cos(alpha), sa = std::sin(alpha);
  const double cb = std::cos(beta), sb = std::sin(beta);
  const double cg = std::cos(gamma), sg = std::sin(gamma);
  RotationMatrix rx{{{{1, 0, 0}, {0, ca, -sa}, {0, sa, ca}}}};
  RotationMatrix ry{{{{cb, 0, sb}, {0, 1, 0}, {-sb, 0, cb}}}};
  RotationMatrix rz{{{{cg, -sg, 0}, {sg, cg, 0}, {0, 0, 1}}}};
  return rz * ry * rx;
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& rhs) const {
  RotationMatrix out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out.m[i][j] = m[i][0] * rhs.m[0][j] + m[i][1] * rhs.m[1][j] + m[i][2] * rhs.m[2][j];
    }
  }
  return out;
}

RotationMatrix RotationMatrix::transposed() const {
  RotationMatrix out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.m[i][j] = m[j][i];
  }
  return out;
}

std::array<double, 3> RotationMatrix::apply(const std::array<double, 3>& v) const {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

double RotationMatrix::orthogonality_error() const {
  const RotationMatrix p = transposed() * *this;
  double err = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) err = std::max(err, std::abs(p.m[i][j] - (i == j ? 1.0 : 0.0)));
  }
  return err;
}

double RotationMatrix::determinant() const {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

RotationMatrix sample_rotation(Rng& rng) {
  const double alpha = rng.uniform(0.0, std::numbers::pi);
  const double beta = rng.uniform(0.0, std::numbers::pi);
  const double gamma = rng.uniform(0.0, std::numbers::pi);
  return RotationMatrix::from_angles(alpha, beta, gamma);
}

Window apply_rotation(const Window& window, const RotationMatrix& r) {
  if (window.data.size() != 3 * window.length) {
    throw Error(ErrorCode::ShapeMismatch, "rotation needs a 3-channel window");
  }
  Window out = window;
  const std::size_t L = window.length;
  for (std::size_t i = 0; i < L; ++i) {
    const auto v = r.apply({window.data[i], window.data[L + i], window.data[2 * L + i]});
    out.data[i] = v[0];
    out.data[L + i] = v[1];
    out.data[2 * L + i] = v[2];
  }
  return out;
}

std::size_t WindowOptions::window_samples() const {
  return whole_samples(window_seconds, target_hz, "window");
}

std::size_t WindowOptions::stride_samples() const {
  return whole_samples(stride_seconds, target_hz, "stride");
}

std::size_t WindowOptions::margin_samples() const {
  return (window_samples() - stride_samples()) / 2;
}

void WindowOptions::validate() const {
  if (!(target_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "target rate must be positive");
  const std::size_t L = window_samples();
  const std::size_t S = stride_samples();
  if (S >= L || (L - S) % 2 != 0) {
    throw Error(ErrorCode::InvalidConfig,
                "the central segment (stride) must sit strictly and symmetrically inside the window");
  }
}

std::size_t window_count(std::size_t n_samples, std::size_t window_samples,
                         std::size_t stride_samples) {
  if (n_samples < window_samples || stride_samples == 0) return 0;
  return (n_samples - window_samples) / stride_samples + 1;
}

std::vector<Window> window_stream(const Recording& rec, const WindowOptions& options) {
  options.validate();
  if (std::abs(rec.sample_rate_hz - options.target_hz) > 1e-6 * options.target_hz) {
    throw Error(ErrorCode::RateMismatch, rec.recording_id + ": recording is at " +
                                             csv::format(rec.sample_rate_hz) +
                                             " Hz, windows need " + csv::format(options.target_hz) +
                                             " Hz");
  }
  const std::size_t L = options.window_samples();
  const std::size_t S = options.stride_samples();
  const std::size_t margin = options.margin_samples();
  const std::size_t count = window_count(rec.samples.size(), L, S);
  const double half_context = (options.window_seconds - options.stride_seconds) / 2.0;

  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t start = k * S;
    std::optional<ActivityLabel> label;
    if (rec.labels) {
      std::array<std::size_t, kNumActivities> votes{};
      for (std::size_t i = start + margin; i < start + margin + S; ++i) ++votes[index_of((*rec.labels)[i])];
      for (std::size_t c = 0; c < kNumActivities; ++c) {
        if (2 * votes[c] > S) label = kAllActivities[c];
      }
      if (!label && !options.keep_unlabeled) continue;
    }
    Window w;
    w.recording_id = rec.recording_id;
    w.subject_id = rec.subject_id;
    w.device_location = rec.device_location;
    w.length = L;
    w.data.resize(3 * L);
    for (std::size_t i = 0; i < L; ++i) {
      const Sample& s = rec.samples[start + i];
      w.data[i] = s.ax;
      w.data[L + i] = s.ay;
      w.data[2 * L + i] = s.az;
    }
    w.label = label;
    w.t_start = rec.samples[start].t;
    w.t_end = w.t_start + options.window_seconds;
    w.central_start = w.t_start + half_context;
    w.central_end = w.central_start + options.stride_seconds;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace har
