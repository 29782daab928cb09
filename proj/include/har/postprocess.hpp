#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "har/activity.hpp"

namespace har {

// Prediction for the central segment of one window.
struct SegmentPrediction {
  double t_start = 0.0;
  double t_end = 0.0;
  std::array<double, kNumActivities> probs{};
  ActivityLabel label = ActivityLabel::Walking;

  double confidence() const;  // max probability
};

// Label = argmax(probs), first index on ties.
SegmentPrediction make_segment(double t_start, double t_end,
                               const std::array<double, kNumActivities>& probs);

enum class FilterVariant : std::uint8_t {
  Majority,       // most frequent label among covering windows
  MaxConfidence,  // label of the most confident covering window
  None,
};

std::string_view to_string(FilterVariant v) noexcept;
std::optional<FilterVariant> parse_filter_variant(std::string_view text) noexcept;

struct FilterOptions {
  double window_seconds = 6.0;
  double stride_seconds = 2.0;
  FilterVariant variant = FilterVariant::Majority;
};

// Relabels each segment from the argmax labels of every window whose span
// covers it. Majority ties go to the label holding the single most confident
// window, then to the window centred nearest the segment (earlier first).
// Probabilities are never modified. Throws NonContiguousSegments unless each
// segment starts where the previous one ends (within 1e-6 s).
std::vector<SegmentPrediction> majority_filter(std::span<const SegmentPrediction> segments,
                                               const FilterOptions& options = {});

enum class GaitClass : std::uint8_t { Gait, NonGait };

std::string_view to_string(GaitClass g) noexcept;
std::optional<GaitClass> parse_gait_class(std::string_view text) noexcept;

// Walking, Running, Stairs -> Gait; Standing, SittingLying, SitToStand -> NonGait.
constexpr GaitClass map_gait(ActivityLabel label) noexcept {
  switch (label) {
    case ActivityLabel::Walking:
    case ActivityLabel::Running:
    case ActivityLabel::Stairs:
      return GaitClass::Gait;
    default:
      return GaitClass::NonGait;
  }
}

struct Bout {
  GaitClass group = GaitClass::Gait;
  double t_start = 0.0;
  double t_end = 0.0;
  double duration = 0.0;
};

struct BoutOptions {
  // Bouts shorter than this are dropped; 0 keeps every bout.
  double min_duration_seconds = 0.0;
};

inline constexpr double kSegmentGapTolerance = 1e-6;

// Maximal runs of equal gait class; a timestamp gap always ends a bout.
// Gait and NonGait bouts are interleaved in time order.
std::vector<Bout> extract_bouts(std::span<const SegmentPrediction> segments,
                                const BoutOptions& options = {});

// Arithmetic mean duration of the bouts in `group`; nullopt when there are none.
std::optional<double> mean_bout_duration(std::span<const Bout> bouts, GaitClass group);

}  // namespace har
