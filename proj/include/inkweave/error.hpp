#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace inkweave {

enum class ErrorCode {
  DegenerateInput,
  EmptyInput,
  BadThresholds,
  DimensionMismatch,
  EmptyRegistry,
  BackendUnavailable,
  BackendTimeout,
  BadResponse,
  UnknownContact,
  ContactAlreadyActive,
  StaleBlob,
  OutOfBounds,
  QueueFull,
  ProtocolError,
  BindFailure,
  UnreadableInput,
  WriteFailure,
  ConnectFailure,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::BadThresholds: return "BadThresholds";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyRegistry: return "EmptyRegistry";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BackendTimeout: return "BackendTimeout";
    case ErrorCode::BadResponse: return "BadResponse";
    case ErrorCode::UnknownContact: return "UnknownContact";
    case ErrorCode::ContactAlreadyActive: return "ContactAlreadyActive";
    case ErrorCode::StaleBlob: return "StaleBlob";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::QueueFull: return "QueueFull";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::BindFailure: return "BindFailure";
    case ErrorCode::UnreadableInput: return "UnreadableInput";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::ConnectFailure: return "ConnectFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Backend failures that the scheduler may retry.
constexpr bool is_retryable(ErrorCode code) {
  return code == ErrorCode::BackendUnavailable || code == ErrorCode::BackendTimeout;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool retryable() const noexcept { return is_retryable(code_); }

 private:
  ErrorCode code_;
};

}  // namespace inkweave
