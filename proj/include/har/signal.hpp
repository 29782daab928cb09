#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "har/activity.hpp"
#include "har/dataio.hpp"
#include "har/rng.hpp"

namespace har {

// Interpolating cubic spline with not-a-knot end conditions: the third
// derivative is continuous at the second and penultimate knots, so the spline
// reproduces every cubic polynomial exactly. Needs at least four knots.
class CubicSpline {
 public:
  CubicSpline(std::span<const double> t, std::span<const double> y);

  // Evaluates inside [front, back]; outside the span the end cubics extend.
  double operator()(double x) const;

  double front() const noexcept { return t_.front(); }
  double back() const noexcept { return t_.back(); }

 private:
  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at the knots
  mutable std::size_t hint_ = 0;
};

struct UniformChannel {
  double t0 = 0.0;
  double rate_hz = 0.0;
  std::vector<double> values;

  double time_at(std::size_t k) const noexcept { return t0 + static_cast<double>(k) / rate_hz; }
};

// Number of grid points t0 + k/rate_hz inside [t0, t_last].
std::size_t uniform_grid_size(double t0, double t_last, double rate_hz);

// Not-a-knot cubic resampling of one channel onto the grid t0 + k/target_hz.
// Throws TooFewSamples (< 4 points) or NonMonotoneTime.
UniformChannel resample_cubic(std::span<const double> t, std::span<const double> values,
                              double target_hz);

// Resamples all three axes; labels follow the nearest source sample.
Recording resample_recording(const Recording& rec, double target_hz);

struct RotationMatrix {
  std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  static RotationMatrix identity() { return {}; }
  // Rz(gamma) * Ry(beta) * Rx(alpha), angles in radians.
  static RotationMatrix from_angles(double alpha, double beta, double gamma);

  RotationMatrix transposed() const;
  std::array<double, 3> apply(const std::array<double, 3>& v) const;
  RotationMatrix operator*(const RotationMatrix& rhs) const;

  // max |R^T R - I| entry
  double orthogonality_error() const;
  double determinant() const;
};

// Angles about x, y and z drawn independently and uniformly from [0, 180]
// degrees, composed as Rz * Ry * Rx.
RotationMatrix sample_rotation(Rng& rng);

// Model input unit: a 3 x L block, channel-major (row c holds axis c).
struct Window {
  std::string recording_id;
  std::string subject_id;
  std::string device_location;
  std::size_t length = 0;
  std::vector<double> data;
  std::optional<ActivityLabel> label;
  double t_start = 0.0;
  double t_end = 0.0;
  double central_start = 0.0;
  double central_end = 0.0;

  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data).subspan(c * length, length);
  }
};

Window apply_rotation(const Window& window, const RotationMatrix& r);

struct WindowOptions {
  double window_seconds = 6.0;
  double stride_seconds = 2.0;
  double target_hz = 20.0;
  // Keep windows whose central segment has no strict label majority (their
  // label is left empty). Prediction wants the full tiling; training does not.
  bool keep_unlabeled = false;

  std::size_t window_samples() const;  // L
  std::size_t stride_samples() const;
  std::size_t margin_samples() const;  // offset of the central segment
  // Throws InvalidConfig when lengths are not whole sample counts or the
  // central segment would not sit strictly inside the window.
  void validate() const;
};

// floor((n - L) / stride) + 1 when n >= L, else 0.
std::size_t window_count(std::size_t n_samples, std::size_t window_samples,
                         std::size_t stride_samples);

// Cuts windows at t0 + k * stride. The recording must already be sampled at
// options.target_hz (RateMismatch otherwise).
std::vector<Window> window_stream(const Recording& rec, const WindowOptions& options = {});

}  // namespace har
