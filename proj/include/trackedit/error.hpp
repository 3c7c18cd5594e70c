#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trackedit {

enum class ErrorCode {
  BehindCamera,
  NonPositiveDepth,
  DegenerateConfiguration,
  MissingFile,
  SchemaViolation,
  ShapeMismatch,
  EmptySelection,
  UnknownObject,
  CountMismatch,
  WouldBeEmpty,
  TooFewTracks,
  VideoTooShort,
  IndivisibleDims,
  EmptyMask,
  FrameTooSmall,
  MissingDepth,
  InvalidArgument,
  IoError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::UnknownObject: return "UnknownObject";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::WouldBeEmpty: return "WouldBeEmpty";
    case ErrorCode::TooFewTracks: return "TooFewTracks";
    case ErrorCode::VideoTooShort: return "VideoTooShort";
    case ErrorCode::IndivisibleDims: return "IndivisibleDims";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::FrameTooSmall: return "FrameTooSmall";
    case ErrorCode::MissingDepth: return "MissingDepth";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code plus optional file/field
/// context, so the CLI and service can report a single parsable line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string file = {},
        std::string field = {})
      : std::runtime_error(format(code, message, file, field)),
        code_(code),
        message_(std::move(message)),
        file_(std::move(file)),
        field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }
  const std::string& file() const noexcept { return file_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            const std::string& file, const std::string& field) {
    std::string out(to_string(code));
    if (!file.empty()) out += " [" + file + "]";
    if (!field.empty()) out += " (" + field + ")";
    out += ": " + message;
    return out;
  }

  ErrorCode code_;
  std::string message_;
  std::string file_;
  std::string field_;
};

}  // namespace trackedit
