#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dpa {

enum class ErrorCode {
  ZeroNorm,
  BehindCamera,
  NonPositiveDepth,
  InvalidArgument,
  EmptyObject,
  EmptySet,
  DegenerateMean,
  EigenFailure,
  DimensionMismatch,
  NoInliers,
  EmptyModel,
  ClassMismatch,
  MissingModel,
  EmptyDistances,
  BadParams,
  PlacementFailure,
  BadMagic,
  VersionUnsupported,
  TruncatedPayload,
  TrailingBytes,
  NonFiniteValue,
  ParseError,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyObject: return "EmptyObject";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DegenerateMean: return "DegenerateMean";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoInliers: return "NoInliers";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::ClassMismatch: return "ClassMismatch";
    case ErrorCode::MissingModel: return "MissingModel";
    case ErrorCode::EmptyDistances: return "EmptyDistances";
    case ErrorCode::BadParams: return "BadParams";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as a dpa::Error carrying a typed code.
/// Parsers additionally record the 1-based line number (0 when not applicable).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, int line = 0)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), line_(line), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  int line() const noexcept { return line_; }
  /// The description without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  int line_;
  std::string message_;
};

}  // namespace dpa
