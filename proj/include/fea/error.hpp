#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fea {

enum class ErrorKind {
  Io,
  MalformedHeader,
  OutOfBounds,
  NonMonotonicTime,
  DimensionMismatch,
  BadMagic,
  TruncatedFile,
  DuplicateName,
  TooFewFrames,
  ShapeMismatch,
  NonFiniteInput,
  PatchSizeMismatch,
  BadWindow,
  InvalidCoordinate,
  InvalidBox,
  BadConfig,
  UnknownGroup,
  MissingCheckpoint,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and tests)
// can branch on the category without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "Io";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::PatchSizeMismatch: return "PatchSizeMismatch";
    case ErrorKind::BadWindow: return "BadWindow";
    case ErrorKind::InvalidCoordinate: return "InvalidCoordinate";
    case ErrorKind::InvalidBox: return "InvalidBox";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::UnknownGroup: return "UnknownGroup";
    case ErrorKind::MissingCheckpoint: return "MissingCheckpoint";
  }
  return "Unknown";
}

}  // namespace fea
