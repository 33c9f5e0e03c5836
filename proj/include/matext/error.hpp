#pragma once

#include <stdexcept>
#include <string>

namespace matext {

enum class ErrorCode {
  FileNotFound,
  IOFailure,
  SchemaMismatch,
  InvalidArm,
  MissingFeature,
  CodedWithoutScore,
  SampleTooLarge,
  NonPositiveSample,
  DegenerateTraining,
  NonFiniteInput,
  WidthMismatch,
  EmptyGrid,
  InsufficientCoded,
  LengthMismatch,
  NotFullyCoded,
  TooFewCoded,
  MissingCovariates,
  MissingInclusionProb,
  InvalidPlan,
  InvalidDGP,
  EmptyText,
  DuplicateId,
};

const char* error_code_name(ErrorCode code);

/// User/config/data error. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Internal invariant breach. The CLI maps std::logic_error to exit code 3.
inline void internal_check(bool cond, const char* what) {
  if (!cond) throw std::logic_error(what);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::IOFailure: return "IOFailure";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InvalidArm: return "InvalidArm";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::CodedWithoutScore: return "CodedWithoutScore";
    case ErrorCode::SampleTooLarge: return "SampleTooLarge";
    case ErrorCode::NonPositiveSample: return "NonPositiveSample";
    case ErrorCode::DegenerateTraining: return "DegenerateTraining";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::InsufficientCoded: return "InsufficientCoded";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NotFullyCoded: return "NotFullyCoded";
    case ErrorCode::TooFewCoded: return "TooFewCoded";
    case ErrorCode::MissingCovariates: return "MissingCovariates";
    case ErrorCode::MissingInclusionProb: return "MissingInclusionProb";
    case ErrorCode::InvalidPlan: return "InvalidPlan";
    case ErrorCode::InvalidDGP: return "InvalidDGP";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DuplicateId: return "DuplicateId";
  }
  return "UnknownError";
}

}  // namespace matext
