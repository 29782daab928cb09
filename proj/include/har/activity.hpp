#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <optional>
#include <string_view>

namespace har {

// Six-class activity set. The enumerator order is the row/column order of
// every confusion matrix and the column order of probability vectors.
enum class ActivityLabel : std::uint8_t {
  Walking = 0,
  Running,
  Stairs,
  Standing,
  SittingLying,
  SitToStand,
};

inline constexpr std::size_t kNumActivities = 6;

inline constexpr std::array<ActivityLabel, kNumActivities> kAllActivities = {
    ActivityLabel::Walking,  ActivityLabel::Running,      ActivityLabel::Stairs,
    ActivityLabel::Standing, ActivityLabel::SittingLying, ActivityLabel::SitToStand,
};

constexpr std::size_t index_of(ActivityLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

// Canonical lowercase name, e.g. "sitting_lying".
std::string_view to_string(ActivityLabel label) noexcept;

// Accepts the canonical names case-insensitively plus a few common spellings
// ("sitting/lying", "sit-to-stand", "sit2stand", ...). Returns nullopt for
// anything outside the six-class set.
std::optional<ActivityLabel> parse_activity(std::string_view text) noexcept;

ActivityLabel activity_from_index(std::size_t index);

}  // namespace har
