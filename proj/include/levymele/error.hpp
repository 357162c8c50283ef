#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace levymele {

enum class ErrorCode {
  InvalidArgument,
  TruncationNotConverged,
  InvalidRegime,
  DomainError,
  DampingInvalid,
  QuadratureNotConverged,
  ContourInvalid,
  InversionNotConverged,
  ModelMismatch,
  HullViolation,
  MaxIterations,
  InsufficientData,
  NoConvergence,
  InfeasibleEverywhere,
  BreadSingular,
  ParseError,
  NonFiniteValue,
  InvariantViolation,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TruncationNotConverged: return "TruncationNotConverged";
    case ErrorCode::InvalidRegime: return "InvalidRegime";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::DampingInvalid: return "DampingInvalid";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::ContourInvalid: return "ContourInvalid";
    case ErrorCode::InversionNotConverged: return "InversionNotConverged";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::HullViolation: return "HullViolation";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InfeasibleEverywhere: return "InfeasibleEverywhere";
    case ErrorCode::BreadSingular: return "BreadSingular";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Input problems (bad files, bad arguments) as opposed to numerical failures.
inline bool is_input_error(ErrorCode code) {
  return code == ErrorCode::ParseError || code == ErrorCode::NonFiniteValue ||
         code == ErrorCode::InvariantViolation || code == ErrorCode::InvalidArgument;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }  // without the code prefix

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace levymele
