#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsim {

/// Failure categories surfaced by the library. Each maps to one named error
/// condition of a public operation.
enum class ErrorCode {
  NonFiniteMass,
  NegativeKernel,
  MissingCutoff,
  OutOfWindow,
  BadIndex,
  EmptyConfiguration,
  GuardTripped,
  EmptyWindow,
  NoPairs,
  TruncationOverflow,
  SizeOverflow,
  StepTooLarge,
  OutOfDomain,
  BadOrdering,
  NoAdmissibleR,
  RiemannBoundFailed,
  BadOmega,
  AlphaTooSmall,
  HorizonNotReached,
  ConfigInvalid,
  IoFailure,
  MissingData,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::NonFiniteMass: return "NonFiniteMass";
    case ErrorCode::NegativeKernel: return "NegativeKernel";
    case ErrorCode::MissingCutoff: return "MissingCutoff";
    case ErrorCode::OutOfWindow: return "OutOfWindow";
    case ErrorCode::BadIndex: return "BadIndex";
    case ErrorCode::EmptyConfiguration: return "EmptyConfiguration";
    case ErrorCode::GuardTripped: return "GuardTripped";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::TruncationOverflow: return "TruncationOverflow";
    case ErrorCode::SizeOverflow: return "SizeOverflow";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::BadOrdering: return "BadOrdering";
    case ErrorCode::NoAdmissibleR: return "NoAdmissibleR";
    case ErrorCode::RiemannBoundFailed: return "RiemannBoundFailed";
    case ErrorCode::BadOmega: return "BadOmega";
    case ErrorCode::AlphaTooSmall: return "AlphaTooSmall";
    case ErrorCode::HorizonNotReached: return "HorizonNotReached";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
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

}  // namespace fsim
