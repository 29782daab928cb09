#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "har/dataio.hpp"

namespace har {

inline constexpr double kGravity = 9.81;

// Fundamental gait frequency of the periodic archetypes; nullopt for the
// static and transition classes.
std::optional<double> archetype_fundamental_hz(ActivityLabel label) noexcept;

struct SynthSpec {
  // Recordings generated per class. With `subjects > 0` the counts apply per
  // subject; otherwise every recording is its own subject.
  std::array<int, kNumActivities> per_class_counts{};
  double duration_seconds = 60.0;
  std::uint64_t seed = 0;
  int subjects = 0;
  double sample_rate_hz = 50.0;
  double noise_sd = 0.1;
  std::string device_location = "belt";
};

// Fully labeled single-class recordings. Order: subject-major, then class
// order, then repetition. Throws InvalidSpec for non-positive counts, a
// duration below 6 s or a non-positive rate.
std::vector<Recording> synth_generate(const SynthSpec& spec);

struct ScheduleItem {
  ActivityLabel label;
  double seconds;
};

// One recording that plays the schedule back to back at 50 Hz (by default),
// with per-sample labels from the schedule. Subject-level variation (gait
// amplitude, phase, device tilt) is drawn from `subject_seed` so recordings
// of the same subject share it; sensor noise is drawn from `noise_seed`.
Recording synth_schedule(std::span<const ScheduleItem> schedule, std::uint64_t subject_seed,
                         std::uint64_t noise_seed, RecordingInfo info,
                         double sample_rate_hz = 50.0, double noise_sd = 0.1);

}  // namespace har
