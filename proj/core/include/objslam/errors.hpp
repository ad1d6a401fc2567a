#pragma once

#include <stdexcept>
#include <string>

namespace objslam {

enum class ErrorCode {
  // geometry
  BehindCamera,
  InvalidDepth,
  AtInfinity,
  // features
  TooSmall,
  NearBorder,
  Undefined,
  Textureless,
  // matching
  Empty,
  // robust
  Degenerate,
  NoModel,
  ReflectionOnly,
  // recognition
  DuplicateName,
  TooFewFeatures,
  NoDepth,
  // bow
  CorpusTooSmall,
  DuplicateKeyframe,
  BadMagic,
  VersionMismatch,
  TruncatedFile,
  ParseError,
  // slam
  NotEnoughDepth,
  NotEnoughObservations,
  NotEnoughInliers,
  MissingDepth,
  LengthMismatch,
  // persistence
  IoError,
  IntegrityError,
  ChecksumMismatch,
  VocabularyMismatch,
  Truncated,
  // sim
  BadParams,
  // control
  LostTarget,
};

const char* error_name(ErrorCode code);

/// Domain error carrying a stable machine-readable code plus a human message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }
  const char* name() const { return error_name(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace objslam
