#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "har/activity.hpp"
#include "har/postprocess.hpp"

namespace har {

// Rows are truth, columns are prediction.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::uint64_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> class_names);
  ConfusionMatrix() = default;

  std::size_t size() const noexcept { return classes.size(); }
  std::uint64_t total() const;
  std::uint64_t trace() const;
  void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1);

  bool operator==(const ConfusionMatrix&) const = default;
};

// Counts truth/pred pairs over the classes in `classes` order. Throws
// LengthMismatch or UnknownLabel (index >= classes.size()).
ConfusionMatrix confusion_matrix(std::span<const std::size_t> truth, std::span<const std::size_t> pred,
                                 std::vector<std::string> classes);

ConfusionMatrix activity_confusion(std::span<const ActivityLabel> truth,
                                   std::span<const ActivityLabel> pred);
ConfusionMatrix gait_confusion(std::span<const ActivityLabel> truth,
                               std::span<const ActivityLabel> pred);

// Collapses a six-activity matrix to Gait / NonGait. Throws ShapeMismatch for
// other sizes.
ConfusionMatrix merge_to_gait(const ConfusionMatrix& activity_cm);

struct ClassMetrics {
  std::string name;
  std::uint64_t support = 0;  // true instances
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Set when the denominator was zero and the value defaulted to 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

struct BinaryMetrics {
  std::string positive;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  double specificity = 0.0;
  bool fpr_undefined = false;
};

struct MetricsReport {
  std::uint64_t total = 0;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
  double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
  std::optional<BinaryMetrics> binary;
};

// Throws EmptyMatrix when cm.total() == 0 and UnknownLabel for a bad positive index.
MetricsReport compute_metrics(const ConfusionMatrix& cm, std::optional<std::size_t> positive = std::nullopt);

// `metric,class,value,undefined` rows.
std::string metrics_csv(const MetricsReport& report);
std::string render_confusion(const ConfusionMatrix& cm);
std::string confusion_csv(const ConfusionMatrix& cm);

// One scored prediction unit (a central segment) with its provenance.
struct ScoredSegment {
  std::string recording_id;
  std::string subject_id;
  std::string device_location;
  std::string group_tag;
  ActivityLabel truth = ActivityLabel::Walking;
  ActivityLabel pred = ActivityLabel::Walking;
};

enum class GroupKey : std::uint8_t { DeviceLocation, Activity, GroupTag, Subject };

std::string_view to_string(GroupKey key) noexcept;
std::optional<GroupKey> parse_group_key(std::string_view text) noexcept;

struct BreakdownRow {
  std::string key;
  std::size_t segments = 0;
  std::size_t subjects = 0;
  double pooled_accuracy = 0.0;        // correct / segments
  double subject_mean_accuracy = 0.0;  // mean of per-subject accuracies
  std::optional<double> subject_sd;    // sample SD, needs >= 2 subjects
  std::optional<MetricsReport> metrics;
};

// One row per distinct key, in first-appearance order. With `gait` the
// metrics and accuracies use the merged Gait / NonGait view. Throws
// MissingMetadata when a segment has an empty grouping key.
std::vector<BreakdownRow> breakdown(std::span<const ScoredSegment> segments, GroupKey key,
                                    bool with_metrics = false, bool gait = false);

std::string breakdown_csv(const std::vector<BreakdownRow>& rows, GroupKey key);

}  // namespace har
