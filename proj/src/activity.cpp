#include "har/activity.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "har/error.hpp"

namespace har {

std::string_view to_string(ActivityLabel label) noexcept {
  switch (label) {
    case ActivityLabel::Walking: return "walking";
    case ActivityLabel::Running: return "running";
    case ActivityLabel::Stairs: return "stairs";
    case ActivityLabel::Standing: return "standing";
    case ActivityLabel::SittingLying: return "sitting_lying";
    case ActivityLabel::SitToStand: return "sit_to_stand";
  }
  return "unknown";
}

std::optional<ActivityLabel> parse_activity(std::string_view text) noexcept {
  std::string key;
  key.reserve(text.size());
  for (char c : text) {
    if (c == '-' || c == '/' || c == ' ') c = '_';
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  for (ActivityLabel label : kAllActivities) {
    if (key == to_string(label)) return label;
  }
  if (key == "stair_walking" || key == "stair") return ActivityLabel::Stairs;
  if (key == "sitlying" || key == "sitting") return ActivityLabel::SittingLying;
  if (key == "sit2stand" || key == "sittostand") return ActivityLabel::SitToStand;
  return std::nullopt;
}

ActivityLabel activity_from_index(std::size_t index) {
  if (index >= kNumActivities) {
    throw Error(ErrorCode::UnknownLabel, "activity index out of range: " + std::to_string(index));
  }
  return kAllActivities[index];
}

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::Io: return "Io";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::DetachedLoss: return "DetachedLoss";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonContiguousSegments: return "NonContiguousSegments";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::MissingMetadata: return "MissingMetadata";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::TiesNotSupported: return "TiesNotSupported";
    case ErrorCode::UnknownTag: return "UnknownTag";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace har
