#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qdc {

enum class ErrorCode {
  NonFiniteValue,
  UnsupportedOuter,
  EmptySet,
  FamilyTooLarge,
  MaxItersExceeded,
  LineSearchFailed,
  RhoTooSmall,
  DescentAuditFailed,
  InsufficientData,
  DenominatorSignViolation,
  InvalidParameter,
  GridTooLarge,
  CurvatureMismatch,
  CertificateFailed,
  ParseError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::UnsupportedOuter: return "UnsupportedOuter";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::FamilyTooLarge: return "FamilyTooLarge";
    case ErrorCode::MaxItersExceeded: return "MaxItersExceeded";
    case ErrorCode::LineSearchFailed: return "LineSearchFailed";
    case ErrorCode::RhoTooSmall: return "RhoTooSmall";
    case ErrorCode::DescentAuditFailed: return "DescentAuditFailed";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DenominatorSignViolation: return "DenominatorSignViolation";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::GridTooLarge: return "GridTooLarge";
    case ErrorCode::CurvatureMismatch: return "CurvatureMismatch";
    case ErrorCode::CertificateFailed: return "CertificateFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qdc
