#ifndef FIDO2D_MESSAGES_H_
#define FIDO2D_MESSAGES_H_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "fido2d/crypto.h"
#include "fido2d/result.h"

// Canonical binary encoding of every protocol message. Layout rules:
//   - one leading tag byte per message kind;
//   - fields in declaration order;
//   - strings, byte strings, nonces and keys: 4-byte big-endian length, then
//     the bytes;
//   - optional fields: one presence byte (0 absent, 1 present), then the
//     value when present;
//   - booleans: one byte, 0 or 1; counters: 4 bytes big-endian;
//   - nested messages are written inline, tag included.
// Decoding accepts exactly the image of Encode(); anything else is rejected
// with the offset of the first offending byte. See docs/wire-format.md.
namespace fido2d::messages {

enum class Tag : uint8_t {
  kRegistrationRequest = 0x01,
  kRegistrationOptions = 0x02,
  kRegistrationResponse = 0x03,
  kLinkNonce = 0x04,
  kLinkResponse = 0x05,
  kAccountActive = 0x06,
  kTransactionRequest = 0x07,
  kTransactionOptions = 0x08,
  kChallengeReply = 0x09,
  kAssertionResponse = 0x0a,
  kTransactionResult = 0x0b,
  kStatusReply = 0x0c,
  kAuthenticatorData = 0x20,
  kAssertion = 0x21,
};

struct RegistrationRequest {
  std::string username;
  bool operator==(const RegistrationRequest&) const = default;
};

struct RegistrationOptions {
  crypto::Nonce challenge;
  std::string server_id;
  std::string username;
  bool operator==(const RegistrationOptions&) const = default;
};

// The signed part of an assertion. The challenge is not a field: it is
// appended to Encode(auth_data) to form the signed payload.
struct AuthenticatorData {
  std::string server_id;
  uint32_t counter = 0;
  bool user_verified = false;
  // Transaction text signed by device A; always absent for device B.
  std::optional<std::string> extension_data;
  bool operator==(const AuthenticatorData&) const = default;
};

struct Assertion {
  AuthenticatorData auth_data;
  crypto::Signature signature;
  bool operator==(const Assertion&) const = default;
};

// Device B's registration: the fresh credential key plus an attestation over
// the registration challenge.
struct RegistrationResponse {
  std::string username;
  crypto::PublicKey public_key;
  Assertion attestation;
  bool operator==(const RegistrationResponse&) const = default;
};

struct LinkNonce {
  crypto::Nonce value;
  std::string username;
  bool operator==(const LinkNonce&) const = default;
};

// Device A's registration keyed by the link nonce; the attestation signs
// Encode(auth_data) || link_nonce.
struct LinkResponse {
  crypto::Nonce link_nonce;
  crypto::PublicKey public_key;
  Assertion attestation;
  bool operator==(const LinkResponse&) const = default;
};

struct AccountActive {
  std::string username;
  bool operator==(const AccountActive&) const = default;
};

struct TransactionRequest {
  std::string username;
  std::string transaction_data;
  bool operator==(const TransactionRequest&) const = default;
};

struct TransactionOptions {
  crypto::Nonce challenge;
  std::string server_id;
  std::optional<std::string> transaction_data;
  bool operator==(const TransactionOptions&) const = default;
};

// The server's answer to a TransactionRequest, echoing the request it
// answers so the browser can pair it with its own pending request. The
// options themselves never carry the transaction text.
struct ChallengeReply {
  TransactionRequest request;
  TransactionOptions options;
  bool operator==(const ChallengeReply&) const = default;
};

// A device's answer to a challenge. The challenge travels alongside so the
// server can find the pending ceremony it belongs to.
struct AssertionResponse {
  std::string username;
  crypto::Nonce challenge;
  Assertion assertion;
  bool operator==(const AssertionResponse&) const = default;
};

struct TransactionResult {
  std::string username;
  std::string transaction_data;
  bool accepted = false;
  bool operator==(const TransactionResult&) const = default;
};

struct StatusReply {
  bool ok = false;
  std::string detail;
  bool operator==(const StatusReply&) const = default;
};

using Message =
    std::variant<RegistrationRequest, RegistrationOptions, RegistrationResponse,
                 LinkNonce, LinkResponse, AccountActive, TransactionRequest,
                 TransactionOptions, ChallengeReply, AssertionResponse,
                 TransactionResult, StatusReply, AuthenticatorData, Assertion>;

struct DecodeError {
  size_t offset = 0;
  std::string reason;

  std::string ToString() const;
};

Result<Bytes> Encode(const Message& message);
Result<Message, DecodeError> Decode(ByteSpan bytes);

// Encode(auth_data) || challenge: the exact bytes a device signs.
Result<Bytes> SignedPayload(const AuthenticatorData& auth_data,
                            const crypto::Nonce& challenge);

std::string_view MessageName(const Message& message);

}  // namespace fido2d::messages

#endif  // FIDO2D_MESSAGES_H_
