#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace seqpix {

enum class ErrorCode {
  BadMagic,
  TruncatedFile,
  DimensionOverflow,
  LabelOutOfRange,
  MalformedLine,
  ValueOutOfRange,
  InsufficientClassCount,
  EmptySet,
  OutOfOrderPixel,
  SweepComplete,
  SizeMismatch,
  NonFiniteGradient,
  TruncatedBuffer,
  TooManyCenters,
  ShapeMismatch,
  HashMismatch,
  CorruptRecord,
  BadModelFile,
  UnsupportedVersion,
  InvalidArgument,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DimensionOverflow: return "DimensionOverflow";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::ValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::InsufficientClassCount: return "InsufficientClassCount";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::OutOfOrderPixel: return "OutOfOrderPixel";
    case ErrorCode::SweepComplete: return "SweepComplete";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::TruncatedBuffer: return "TruncatedBuffer";
    case ErrorCode::TooManyCenters: return "TooManyCenters";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::BadModelFile: return "BadModelFile";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// Every failure in the library is reported as a seqpix::Error carrying a code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace seqpix
