#include "objslam/errors.hpp"

namespace objslam {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::AtInfinity: return "AtInfinity";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::NearBorder: return "NearBorder";
    case ErrorCode::Undefined: return "Undefined";
    case ErrorCode::Textureless: return "Textureless";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::Degenerate: return "Degenerate";
    case ErrorCode::NoModel: return "NoModel";
    case ErrorCode::ReflectionOnly: return "ReflectionOnly";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::TooFewFeatures: return "TooFewFeatures";
    case ErrorCode::NoDepth: return "NoDepth";
    case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
    case ErrorCode::DuplicateKeyframe: return "DuplicateKeyframe";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NotEnoughDepth: return "NotEnoughDepth";
    case ErrorCode::NotEnoughObservations: return "NotEnoughObservations";
    case ErrorCode::NotEnoughInliers: return "NotEnoughInliers";
    case ErrorCode::MissingDepth: return "MissingDepth";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::LostTarget: return "LostTarget";
  }
  return "Unknown";
}

}  // namespace objslam
