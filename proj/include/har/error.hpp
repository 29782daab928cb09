#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace har {

enum class ErrorCode {
  // dataio
  MissingColumn,
  NonMonotoneTime,
  UnknownLabel,
  RateMismatch,
  TooFewSubjects,
  InvalidSpec,
  InvalidManifest,
  Io,
  // signal
  TooFewSamples,
  // autodiff
  ShapeMismatch,
  DegenerateBatch,
  InvalidTarget,
  DetachedLoss,
  // model
  InvalidConfig,
  CorruptCheckpoint,
  // train
  StepOutOfRange,
  NonFiniteGradient,
  EmptyDataset,
  NonFiniteLoss,
  // postprocess
  NonContiguousSegments,
  // eval
  LengthMismatch,
  EmptyMatrix,
  MissingMetadata,
  // stats
  EmptyGroup,
  TiesNotSupported,
  UnknownTag,
};

std::string_view to_string(ErrorCode code) noexcept;

// All pipeline failures surface as this exception; `code()` identifies the
// contract that was violated and `what()` carries a human-readable diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace har
