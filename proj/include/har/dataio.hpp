#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "har/activity.hpp"

namespace har {

struct Sample {
  double t = 0.0;  // seconds
  double ax = 0.0;  // m/s^2, gravity included
  double ay = 0.0;
  double az = 0.0;

  bool operator==(const Sample&) const = default;
};

// One subject x device accelerometer stream.
struct Recording {
  std::string recording_id;
  std::string subject_id;
  std::string device_location;
  double sample_rate_hz = 0.0;
  std::vector<Sample> samples;
  std::optional<std::vector<ActivityLabel>> labels;

  bool labeled() const noexcept { return labels.has_value(); }
  std::size_t size() const noexcept { return samples.size(); }
  double duration() const noexcept {
    return samples.empty() ? 0.0 : samples.back().t - samples.front().t;
  }

  bool operator==(const Recording&) const = default;
};

// Throws NonMonotoneTime, UnknownLabel (label count mismatch) or RateMismatch
// when the invariants of `rec` do not hold.
void validate(const Recording& rec);

// 1 / median sample spacing. Requires at least two samples.
double measured_rate_hz(const std::vector<Sample>& samples);

struct RecordingInfo {
  std::string recording_id;
  std::string subject_id;
  std::string device_location;
};

// Parses the canonical CSV (`t,ax,ay,az` or `t,ax,ay,az,label`).
// Without `info` the recording id defaults to the file stem.
Recording parse_recording(const std::filesystem::path& path,
                          std::optional<double> expected_hz = std::nullopt,
                          std::optional<RecordingInfo> info = std::nullopt);

Recording parse_recording_text(std::string_view text, std::optional<double> expected_hz,
                               RecordingInfo info);

// Canonical CSV text; values use the shortest round-trip decimal form, so
// parse_recording_text(serialize_recording(r)) reproduces every sample exactly.
std::string serialize_recording(const Recording& rec);
void write_recording(const std::filesystem::path& path, const Recording& rec);

struct SubjectMetadata {
  std::string subject_id;
  std::string group_tag;
  std::optional<bool> walking_aid;

  bool operator==(const SubjectMetadata&) const = default;
};

struct ManifestEntry {
  std::string recording_id;
  std::string subject_id;
  std::string device_location;
  std::string path;  // as written in the manifest
  std::string group_tag;
  std::optional<bool> walking_aid;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;
  std::vector<SubjectMetadata> subjects;  // first-appearance order, unique ids

  std::filesystem::path resolve(const ManifestEntry& entry) const;
  const SubjectMetadata* find_subject(std::string_view subject_id) const;
  std::vector<std::string> subject_ids() const;
};

inline constexpr std::string_view kManifestHeader =
    "recording_id,subject_id,device_location,path,group_tag,walking_aid";

Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest_text(std::string_view text, std::filesystem::path base_dir);
std::string serialize_manifest(const Manifest& manifest);

// Parses every recording listed in the manifest, in manifest order.
std::vector<Recording> load_recordings(const Manifest& manifest,
                                       std::optional<double> expected_hz = std::nullopt);

enum class SplitSet : std::uint8_t { Train, Validation, Evaluation };

std::string_view to_string(SplitSet set) noexcept;
std::optional<SplitSet> parse_split_set(std::string_view text) noexcept;

struct SplitAssignment {
  std::map<std::string, SplitSet> sets;

  std::vector<std::string> subjects_in(SplitSet set) const;
  std::size_t count(SplitSet set) const;
  bool operator==(const SplitAssignment&) const = default;
};

struct SplitRatios {
  double train = 0.6;
  double validation = 0.2;
  double evaluation = 0.2;
};

// Seeded participant-level split; set sizes follow the ratios by largest
// remainder rounding. Throws TooFewSubjects for fewer than three subjects.
SplitAssignment subject_split(const std::vector<std::string>& subjects, SplitRatios ratios,
                              std::uint64_t seed);

struct FoldPolicy {
  enum class Kind : std::uint8_t { KFold, LeaveOneOut, LeaveOneOutTrainPair };

  Kind kind = Kind::LeaveOneOut;
  int k = 5;  // KFold only
  // Share of non-evaluation subjects held out for validation (KFold and
  // LeaveOneOut). Ignored by LeaveOneOutTrainPair.
  double validation_fraction = 0.2;

  static FoldPolicy kfold(int k) { return {Kind::KFold, k, 0.2}; }
  static FoldPolicy leave_one_out() { return {Kind::LeaveOneOut, 0, 0.2}; }
  static FoldPolicy leave_one_out_train_pair() { return {Kind::LeaveOneOutTrainPair, 0, 0.0}; }
};

struct FoldPlan {
  FoldPolicy policy;
  std::vector<SplitAssignment> folds;
};

FoldPlan make_folds(const std::vector<std::string>& subjects, FoldPolicy policy,
                    std::uint64_t seed);

// `fold,subject_id,set` table; a single split is written as fold 0.
std::string serialize_folds(const FoldPlan& plan);
FoldPlan parse_folds_text(std::string_view text);

}  // namespace har
