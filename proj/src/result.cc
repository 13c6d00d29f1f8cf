#include "fido2d/result.h"

namespace fido2d {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput:
      return "invalid-input";
    case ErrorCode::kMalformed:
      return "malformed";
    case ErrorCode::kRegistrationRefused:
      return "registration-refused";
    case ErrorCode::kRegistrationFailed:
      return "registration-failed";
    case ErrorCode::kLinkFailed:
      return "link-failed";
    case ErrorCode::kTransactionRefused:
      return "transaction-refused";
    case ErrorCode::kTransactionAborted:
      return "transaction-aborted";
    case ErrorCode::kUnknownChallenge:
      return "unknown-challenge";
    case ErrorCode::kUserDeclined:
      return "user-declined";
    case ErrorCode::kNoCredential:
      return "no-credential";
    case ErrorCode::kLinkInputError:
      return "link-input-error";
    case ErrorCode::kOriginMismatch:
      return "origin-mismatch";
    case ErrorCode::kChannelViolation:
      return "channel-violation";
    case ErrorCode::kScheduleError:
      return "schedule-error";
    case ErrorCode::kTransport:
      return "transport";
  }
  return "unknown";
}

std::string Error::ToString() const {
  std::string out(ErrorCodeName(code));
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace fido2d
