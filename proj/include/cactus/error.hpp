#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace cactus {

enum class ErrorCode {
  InvalidArgument,
  Malformed,
  LevelOverflow,
  BeforeOrigin,
  TreeLifespanExceeded,
  KeyUnavailable,
  OrderingViolation,
  AuthenticityFailure,
  IntegrityFailure,
  DecryptionFailure,
  ChainBroken,
  PairingAborted,
  EscrowLocked,
  Rejected,
  ReplayRejected,
  AlreadyReset,
  NotInitialized,
  Conflict,
  Io,
};

inline const char* to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Malformed: return "Malformed";
    case ErrorCode::LevelOverflow: return "LevelOverflow";
    case ErrorCode::BeforeOrigin: return "BeforeOrigin";
    case ErrorCode::TreeLifespanExceeded: return "TreeLifespanExceeded";
    case ErrorCode::KeyUnavailable: return "KeyUnavailable";
    case ErrorCode::OrderingViolation: return "OrderingViolation";
    case ErrorCode::AuthenticityFailure: return "AuthenticityFailure";
    case ErrorCode::IntegrityFailure: return "IntegrityFailure";
    case ErrorCode::DecryptionFailure: return "DecryptionFailure";
    case ErrorCode::ChainBroken: return "ChainBroken";
    case ErrorCode::PairingAborted: return "PairingAborted";
    case ErrorCode::EscrowLocked: return "EscrowLocked";
    case ErrorCode::Rejected: return "Rejected";
    case ErrorCode::ReplayRejected: return "ReplayRejected";
    case ErrorCode::AlreadyReset: return "AlreadyReset";
    case ErrorCode::NotInitialized: return "NotInitialized";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Error carrying a machine-checkable code. `detail` holds the frame index
/// for per-frame failures, the first missing epoch for KeyUnavailable and the
/// protocol step for PairingAborted.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what, std::optional<uint64_t> detail = std::nullopt)
    : std::runtime_error(std::string(to_string(code)) + ": " + what)
    , code_(code)
    , detail_(detail)
  {
  }

  ErrorCode code() const noexcept { return code_; }
  std::optional<uint64_t> detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  std::optional<uint64_t> detail_;
};

} // namespace cactus
