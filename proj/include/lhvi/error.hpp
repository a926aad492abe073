#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lhvi {

enum class ErrorCode {
  UnknownVariable,
  ArityMismatch,
  DuplicateId,
  InvalidEvidenceValue,
  DomainMismatch,
  ClusterCoverageError,
  NonRefinementError,
  Unsplittable,
  NonFiniteIntegrand,
  NonFiniteGradient,
  DivergenceDetected,
  SupportMismatch,
  NotGaussian,
  NotPositiveDefinite,
  TooLarge,
  NonIntegrable,
  InvalidArgument,
  ParseError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidEvidenceValue: return "InvalidEvidenceValue";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::ClusterCoverageError: return "ClusterCoverageError";
    case ErrorCode::NonRefinementError: return "NonRefinementError";
    case ErrorCode::Unsplittable: return "Unsplittable";
    case ErrorCode::NonFiniteIntegrand: return "NonFiniteIntegrand";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::NotGaussian: return "NotGaussian";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NonIntegrable: return "NonIntegrable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

// All library failures are reported through this type; code() identifies the
// failure class so callers (the CLI in particular) can map it to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lhvi
