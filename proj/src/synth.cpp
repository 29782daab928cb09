#include "har/synth.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "har/error.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SubjectStyle {
  double amplitude = 1.0;
  double phase = 0.0;
  double tilt[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
};

SubjectStyle draw_style(std::uint64_t seed) {
  Rng rng(seed);
  SubjectStyle style;
  style.amplitude = rng.uniform(0.9, 1.1);
  style.phase = rng.uniform(0.0, kTwoPi);
  const double deg = std::numbers::pi / 180.0;
  const double a = rng.uniform(-10.0, 10.0) * deg;
  const double b = rng.uniform(-10.0, 10.0) * deg;
  const double c = rng.uniform(-10.0, 10.0) * deg;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  // Rz(c) * Ry(b) * Rx(a)
  const double m[3][3] = {
      {cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa},
      {sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa},
      {-sb, cb * sa, cb * ca},
  };
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) style.tilt[i][j] = m[i][j];
  }
  return style;
}

struct Vec3 {
  double x, y, z;
};

// Noise-free device-frame acceleration; y is the vertical axis when upright.
Vec3 archetype(ActivityLabel label, double t, const SubjectStyle& s) {
  const double amp = s.amplitude;
  const double ph = s.phase;
  switch (label) {
    case ActivityLabel::Walking: {
      const double w = kTwoPi * 1.8;
      return {amp * 1.0 * std::sin(w * t + ph),
              kGravity + amp * (2.0 * std::sin(w * t) + 0.6 * std::sin(2 * w * t + 0.5)),
              amp * 0.5 * std::sin(0.5 * w * t + ph)};
    }
    case ActivityLabel::Running: {
      const double w = kTwoPi * 2.8;
      return {amp * 2.5 * std::sin(w * t + ph),
              kGravity + amp * (6.0 * std::sin(w * t) + 2.0 * std::sin(2 * w * t + 0.3)),
              amp * 1.2 * std::sin(0.5 * w * t + ph)};
    }
    case ActivityLabel::Stairs: {
      const double w = kTwoPi * 1.2;
      return {amp * 1.5 * std::sin(w * t + ph),
              kGravity + amp * (3.0 * std::sin(w * t) + 1.2 * std::sin(2 * w * t + 1.0)),
              amp * 0.8 * std::sin(0.5 * w * t + ph)};
    }
    case ActivityLabel::Standing:
      return {0.15 * std::sin(kTwoPi * 0.3 * t + ph), kGravity,
              0.10 * std::sin(kTwoPi * 0.2 * t + ph)};
    case ActivityLabel::SittingLying:
      return {0.0, 0.05 * std::sin(kTwoPi * 0.25 * t + ph), kGravity};
    case ActivityLabel::SitToStand: {
      // Repeated sit-stand-sit ramps: trunk angle sweeps 0..90 degrees and
      // back every 4 s with a vertical push while rising.
      constexpr double period = 4.0;
      double phase = std::fmod(t + ph / kTwoPi * period, period) / period;
      const double ramp = phase < 0.5 ? 2.0 * phase : 2.0 - 2.0 * phase;
      const double theta = ramp * std::numbers::pi / 2.0;
      const double push = phase < 0.5 ? 2.0 * amp * std::sin(kTwoPi * phase) : 0.0;
      return {0.0, kGravity * std::sin(theta) + push, kGravity * std::cos(theta)};
    }
  }
  return {0.0, 0.0, 0.0};
}

}  // namespace

std::optional<double> archetype_fundamental_hz(ActivityLabel label) noexcept {
  switch (label) {
    case ActivityLabel::Walking: return 1.8;
    case ActivityLabel::Running: return 2.8;
    case ActivityLabel::Stairs: return 1.2;
    default: return std::nullopt;
  }
}

Recording synth_schedule(std::span<const ScheduleItem> schedule, std::uint64_t subject_seed,
                         std::uint64_t noise_seed, RecordingInfo info, double sample_rate_hz,
                         double noise_sd) {
  if (!(sample_rate_hz > 0.0) || noise_sd < 0.0) {
    throw Error(ErrorCode::InvalidSpec, "sample rate must be positive and noise non-negative");
  }
  double total = 0.0;
  for (const auto& item : schedule) {
    if (!(item.seconds > 0.0)) throw Error(ErrorCode::InvalidSpec, "schedule durations must be positive");
    total += item.seconds;
  }
  const SubjectStyle style = draw_style(subject_seed);
  Rng noise(noise_seed);

  Recording rec;
  rec.recording_id = std::move(info.recording_id);
  rec.subject_id = std::move(info.subject_id);
  rec.device_location = std::move(info.device_location);
  rec.sample_rate_hz = sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(total * sample_rate_hz));
  rec.samples.reserve(n);
  std::vector<ActivityLabel> labels;
  labels.reserve(n);

  std::size_t block = 0;
  double block_end = schedule.empty() ? 0.0 : schedule[0].seconds;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / sample_rate_hz;
    while (block + 1 < schedule.size() && t >= block_end - 1e-9) {
      ++block;
      block_end += schedule[block].seconds;
    }
    const ActivityLabel label = schedule[block].label;
    const Vec3 v = archetype(label, t, style);
    const double raw[3] = {v.x + noise.normal(0.0, noise_sd), v.y + noise.normal(0.0, noise_sd),
                           v.z + noise.normal(0.0, noise_sd)};
    double out[3];
    for (int i = 0; i < 3; ++i) {
      out[i] = style.tilt[i][0] * raw[0] + style.tilt[i][1] * raw[1] + style.tilt[i][2] * raw[2];
    }
    rec.samples.push_back({t, out[0], out[1], out[2]});
    labels.push_back(label);
  }
  rec.labels = std::move(labels);
  return rec;
}

std::vector<Recording> synth_generate(const SynthSpec& spec) {
  if (spec.duration_seconds < 6.0) {
    throw Error(ErrorCode::InvalidSpec, "synthetic recordings need at least 6 s");
  }
  if (spec.subjects < 0) throw Error(ErrorCode::InvalidSpec, "subject count must be non-negative");
  int total = 0;
  for (int c : spec.per_class_counts) {
    if (c < 0) throw Error(ErrorCode::InvalidSpec, "per-class counts must be non-negative");
    total += c;
  }
  if (total == 0) throw Error(ErrorCode::InvalidSpec, "at least one recording must be requested");

  auto subject_name = [](int i) {
    std::string id = std::to_string(i + 1);
    return "S" + std::string(id.size() < 2 ? 2 - id.size() : 0, '0') + id;
  };

  std::vector<Recording> out;
  const int n_subjects = spec.subjects > 0 ? spec.subjects : 1;
  std::uint64_t index = 0;
  int solo_subject = 0;
  for (int s = 0; s < n_subjects; ++s) {
    for (std::size_t c = 0; c < kNumActivities; ++c) {
      for (int r = 0; r < spec.per_class_counts[c]; ++r, ++index) {
        const int subject = spec.subjects > 0 ? s : solo_subject++;
        const std::string sid = subject_name(subject);
        const std::string rid =
            sid + "_" + std::string(to_string(kAllActivities[c])) + "_" + std::to_string(r);
        const ScheduleItem item{kAllActivities[c], spec.duration_seconds};
        out.push_back(synth_schedule(std::span<const ScheduleItem>(&item, 1),
                                     mix_seed(spec.seed, 1000003ULL * static_cast<std::uint64_t>(subject)),
                                     mix_seed(spec.seed ^ 0x5EEDULL, index),
                                     RecordingInfo{rid, sid, spec.device_location},
                                     spec.sample_rate_hz, spec.noise_sd));
      }
    }
  }
  return out;
}

}  // namespace har
