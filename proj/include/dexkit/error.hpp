#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dexkit {

enum class ErrorCode {
  // dataset format
  MalformedJson,
  MissingField,
  BadFieldType,
  BadImageRef,
  BadViewName,
  ValidationFailed,
  // mp4 container
  TruncatedBox,
  NoMoov,
  NoVideoTrack,
  LargesizeOverflow,
  UnsupportedFragmented,
  MissingSampleTable,
  InconsistentTables,
  FrameOutOfRange,
  // action codec
  EmptyStream,
  RaggedDimensions,
  DimensionMismatch,
  TokenOutOfRange,
  ArmMismatch,
  BadDof,
  MaskMismatch,
  // conversion
  EncoderFailed,
  FrameCountMismatch,
  StaleVideo,
  FrameIdxOutOfRange,
  MetadataMismatch,
  DecodeMismatch,
  BadBundle,
  // experiment config
  UnknownParent,
  CycleDetected,
  UnknownSection,
  BadConfig,
  DuplicateRegistration,
  UnknownFactory,
  UnknownTask,
  BadOverride,
  // serving
  BadRequest,
  BackendFault,
  PortInUse,
  ServerUnreachable,
  NonFiniteAction,
  // process level
  Io,
  Usage,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::BadFieldType: return "BadFieldType";
    case ErrorCode::BadImageRef: return "BadImageRef";
    case ErrorCode::BadViewName: return "BadViewName";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::TruncatedBox: return "TruncatedBox";
    case ErrorCode::NoMoov: return "NoMoov";
    case ErrorCode::NoVideoTrack: return "NoVideoTrack";
    case ErrorCode::LargesizeOverflow: return "LargesizeOverflow";
    case ErrorCode::UnsupportedFragmented: return "UnsupportedFragmented";
    case ErrorCode::MissingSampleTable: return "MissingSampleTable";
    case ErrorCode::InconsistentTables: return "InconsistentTables";
    case ErrorCode::FrameOutOfRange: return "FrameOutOfRange";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::RaggedDimensions: return "RaggedDimensions";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::ArmMismatch: return "ArmMismatch";
    case ErrorCode::BadDof: return "BadDof";
    case ErrorCode::MaskMismatch: return "MaskMismatch";
    case ErrorCode::EncoderFailed: return "EncoderFailed";
    case ErrorCode::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorCode::StaleVideo: return "StaleVideo";
    case ErrorCode::FrameIdxOutOfRange: return "FrameIdxOutOfRange";
    case ErrorCode::MetadataMismatch: return "MetadataMismatch";
    case ErrorCode::DecodeMismatch: return "DecodeMismatch";
    case ErrorCode::BadBundle: return "BadBundle";
    case ErrorCode::UnknownParent: return "UnknownParent";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::UnknownSection: return "UnknownSection";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::DuplicateRegistration: return "DuplicateRegistration";
    case ErrorCode::UnknownFactory: return "UnknownFactory";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::BadOverride: return "BadOverride";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::BackendFault: return "BackendFault";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::ServerUnreachable: return "ServerUnreachable";
    case ErrorCode::NonFiniteAction: return "NonFiniteAction";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

/// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
  Success = 0,
  ValidationFailure = 1,
  UsageError = 2,
  ExternalFailure = 3,
};

inline ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownTask:
    case ErrorCode::BadOverride:
    case ErrorCode::Usage:
      return ExitCode::UsageError;
    case ErrorCode::Io:
    case ErrorCode::EncoderFailed:
    case ErrorCode::PortInUse:
    case ErrorCode::ServerUnreachable:
    case ErrorCode::BackendFault:
      return ExitCode::ExternalFailure;
    default:
      return ExitCode::ValidationFailure;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Error raised by the mp4 parser; carries the absolute file offset of the
/// offending box when one is known.
class Mp4Error : public Error {
 public:
  Mp4Error(ErrorCode code, const std::string& message, std::uint64_t offset = 0)
      : Error(code, message + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace dexkit
