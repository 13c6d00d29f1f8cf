#include "fido2d/messages.h"

#include <cstring>
#include <limits>
#include <type_traits>

namespace fido2d::messages {
namespace {

// Strict UTF-8: no overlongs, no surrogates, nothing above U+10FFFF.
bool IsValidUtf8(std::string_view s) {
  size_t i = 0;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = p[i];
    size_t extra;
    uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      extra = 1;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      extra = 2;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) {
      return false;
    }
    for (size_t k = 1; k <= extra; ++k) {
      if ((p[i + k] & 0xc0) != 0x80) {
        return false;
      }
      cp = (cp << 6) | (p[i + k] & 0x3f);
    }
    static constexpr uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

class Writer {
 public:
  void Tag(messages::Tag tag) { out_.push_back(static_cast<uint8_t>(tag)); }
  void U8(uint8_t v) { out_.push_back(v); }
  void U32(uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) {
      out_.push_back(static_cast<uint8_t>(v >> shift));
    }
  }
  void Blob(ByteSpan bytes) {
    U32(static_cast<uint32_t>(bytes.size()));
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  void Text(std::string_view field, std::string_view s, bool allow_empty) {
    if (!allow_empty && s.empty()) {
      Fail(std::string(field) + " must be non-empty");
    }
    if (!IsValidUtf8(s)) {
      Fail(std::string(field) + " is not valid UTF-8");
    }
    Blob(ByteSpan(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
  }
  void Fail(std::string why) {
    if (!error_) {
      error_ = std::move(why);
    }
  }

  Bytes& out() { return out_; }
  const std::optional<std::string>& error() const { return error_; }

 private:
  Bytes out_;
  std::optional<std::string> error_;
};

class Reader {
 public:
  explicit Reader(ByteSpan in) : in_(in) {}

  bool failed() const { return error_.has_value(); }
  size_t offset() const { return pos_; }
  bool AtEnd() const { return pos_ == in_.size(); }
  const DecodeError& error() const { return *error_; }

  void Fail(size_t at, std::string why) {
    if (!error_) {
      error_ = DecodeError{at, std::move(why)};
    }
  }

  uint8_t Peek() {
    if (pos_ >= in_.size()) {
      Fail(pos_, "truncated");
      return 0;
    }
    return in_[pos_];
  }
  uint8_t U8() {
    if (failed()) return 0;
    if (pos_ >= in_.size()) {
      Fail(pos_, "truncated");
      return 0;
    }
    return in_[pos_++];
  }
  uint32_t U32() {
    if (failed()) return 0;
    if (in_.size() - pos_ < 4) {
      Fail(pos_, "truncated length/counter");
      return 0;
    }
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v = (v << 8) | in_[pos_++];
    }
    return v;
  }
  Bytes Blob() {
    size_t at = pos_;
    uint32_t len = U32();
    if (failed()) return {};
    if (in_.size() - pos_ < len) {
      Fail(at, "length prefix " + std::to_string(len) + " exceeds input");
      return {};
    }
    Bytes out(in_.begin() + pos_, in_.begin() + pos_ + len);
    pos_ += len;
    return out;
  }
  bool Bool() {
    size_t at = pos_;
    uint8_t v = U8();
    if (!failed() && v > 1) {
      Fail(at, "boolean byte must be 0 or 1");
    }
    return v == 1;
  }
  std::string Text(std::string_view field, bool allow_empty) {
    size_t at = pos_;
    Bytes raw = Blob();
    if (failed()) return {};
    std::string s(raw.begin(), raw.end());
    if (!allow_empty && s.empty()) {
      Fail(at, std::string(field) + " must be non-empty");
    } else if (!IsValidUtf8(s)) {
      Fail(at, std::string(field) + " is not valid UTF-8");
    }
    return s;
  }
  template <size_t N>
  std::array<uint8_t, N> Fixed(std::string_view field) {
    size_t at = pos_;
    Bytes raw = Blob();
    std::array<uint8_t, N> out{};
    if (failed()) return out;
    if (raw.size() != N) {
      Fail(at, std::string(field) + " must be " + std::to_string(N) +
                   " bytes");
      return out;
    }
    std::memcpy(out.data(), raw.data(), N);
    return out;
  }
  void ExpectTag(Tag tag) {
    size_t at = pos_;
    uint8_t t = U8();
    if (!failed() && t != static_cast<uint8_t>(tag)) {
      Fail(at, "unexpected tag");
    }
  }

 private:
  ByteSpan in_;
  size_t pos_ = 0;
  std::optional<DecodeError> error_;
};

// ---- writers -------------------------------------------------------------

void Write(Writer& w, const crypto::Nonce& n) { w.Blob(n.bytes); }
void Write(Writer& w, const crypto::PublicKey& k) { w.Blob(k.bytes); }

void Write(Writer& w, const RegistrationRequest& m) {
  w.Tag(Tag::kRegistrationRequest);
  w.Text("username", m.username, false);
}
void Write(Writer& w, const RegistrationOptions& m) {
  w.Tag(Tag::kRegistrationOptions);
  Write(w, m.challenge);
  w.Text("server_id", m.server_id, false);
  w.Text("username", m.username, false);
}
void Write(Writer& w, const AuthenticatorData& m) {
  w.Tag(Tag::kAuthenticatorData);
  w.Text("server_id", m.server_id, false);
  w.U32(m.counter);
  w.U8(m.user_verified ? 1 : 0);
  w.U8(m.extension_data ? 1 : 0);
  if (m.extension_data) {
    w.Text("extension_data", *m.extension_data, true);
  }
}
void Write(Writer& w, const Assertion& m) {
  w.Tag(Tag::kAssertion);
  Write(w, m.auth_data);
  w.Blob(m.signature.bytes);
}
void Write(Writer& w, const RegistrationResponse& m) {
  w.Tag(Tag::kRegistrationResponse);
  w.Text("username", m.username, false);
  Write(w, m.public_key);
  Write(w, m.attestation);
}
void Write(Writer& w, const LinkNonce& m) {
  w.Tag(Tag::kLinkNonce);
  Write(w, m.value);
  w.Text("username", m.username, false);
}
void Write(Writer& w, const LinkResponse& m) {
  w.Tag(Tag::kLinkResponse);
  Write(w, m.link_nonce);
  Write(w, m.public_key);
  Write(w, m.attestation);
}
void Write(Writer& w, const AccountActive& m) {
  w.Tag(Tag::kAccountActive);
  w.Text("username", m.username, false);
}
void Write(Writer& w, const TransactionRequest& m) {
  w.Tag(Tag::kTransactionRequest);
  w.Text("username", m.username, false);
  w.Text("transaction_data", m.transaction_data, true);
}
void Write(Writer& w, const TransactionOptions& m) {
  w.Tag(Tag::kTransactionOptions);
  Write(w, m.challenge);
  w.Text("server_id", m.server_id, false);
  w.U8(m.transaction_data ? 1 : 0);
  if (m.transaction_data) {
    w.Text("transaction_data", *m.transaction_data, true);
  }
}
void Write(Writer& w, const ChallengeReply& m) {
  w.Tag(Tag::kChallengeReply);
  Write(w, m.request);
  Write(w, m.options);
}
void Write(Writer& w, const AssertionResponse& m) {
  w.Tag(Tag::kAssertionResponse);
  w.Text("username", m.username, false);
  Write(w, m.challenge);
  Write(w, m.assertion);
}
void Write(Writer& w, const TransactionResult& m) {
  w.Tag(Tag::kTransactionResult);
  w.Text("username", m.username, false);
  w.Text("transaction_data", m.transaction_data, true);
  w.U8(m.accepted ? 1 : 0);
}
void Write(Writer& w, const StatusReply& m) {
  w.Tag(Tag::kStatusReply);
  w.U8(m.ok ? 1 : 0);
  w.Text("detail", m.detail, true);
}

// ---- readers: each consumes the tag it expects ----------------------------

crypto::Nonce ReadNonce(Reader& r) {
  return crypto::Nonce{r.Fixed<crypto::kNonceSize>("nonce")};
}
crypto::PublicKey ReadKey(Reader& r) {
  return crypto::PublicKey{r.Fixed<crypto::kPublicKeySize>("public_key")};
}

std::optional<std::string> ReadOptionalText(Reader& r, std::string_view field) {
  if (!r.Bool()) {
    return std::nullopt;
  }
  return r.Text(field, true);
}

TransactionRequest ReadTransactionRequest(Reader& r) {
  r.ExpectTag(Tag::kTransactionRequest);
  TransactionRequest m;
  m.username = r.Text("username", false);
  m.transaction_data = r.Text("transaction_data", true);
  return m;
}
TransactionOptions ReadTransactionOptions(Reader& r) {
  r.ExpectTag(Tag::kTransactionOptions);
  TransactionOptions m;
  m.challenge = ReadNonce(r);
  m.server_id = r.Text("server_id", false);
  m.transaction_data = ReadOptionalText(r, "transaction_data");
  return m;
}
AuthenticatorData ReadAuthenticatorData(Reader& r) {
  r.ExpectTag(Tag::kAuthenticatorData);
  AuthenticatorData m;
  m.server_id = r.Text("server_id", false);
  m.counter = r.U32();
  m.user_verified = r.Bool();
  m.extension_data = ReadOptionalText(r, "extension_data");
  return m;
}
Assertion ReadAssertion(Reader& r) {
  r.ExpectTag(Tag::kAssertion);
  Assertion m;
  m.auth_data = ReadAuthenticatorData(r);
  m.signature.bytes = r.Blob();
  return m;
}

Result<Message, DecodeError> ReadMessage(Reader& r) {
  const uint8_t tag = r.Peek();
  if (r.failed()) {
    return r.error();
  }
  Message out;
  switch (static_cast<Tag>(tag)) {
    case Tag::kRegistrationRequest: {
      r.ExpectTag(Tag::kRegistrationRequest);
      out = RegistrationRequest{r.Text("username", false)};
      break;
    }
    case Tag::kRegistrationOptions: {
      r.ExpectTag(Tag::kRegistrationOptions);
      RegistrationOptions m;
      m.challenge = ReadNonce(r);
      m.server_id = r.Text("server_id", false);
      m.username = r.Text("username", false);
      out = std::move(m);
      break;
    }
    case Tag::kRegistrationResponse: {
      r.ExpectTag(Tag::kRegistrationResponse);
      RegistrationResponse m;
      m.username = r.Text("username", false);
      m.public_key = ReadKey(r);
      m.attestation = ReadAssertion(r);
      out = std::move(m);
      break;
    }
    case Tag::kLinkNonce: {
      r.ExpectTag(Tag::kLinkNonce);
      LinkNonce m;
      m.value = ReadNonce(r);
      m.username = r.Text("username", false);
      out = std::move(m);
      break;
    }
    case Tag::kLinkResponse: {
      r.ExpectTag(Tag::kLinkResponse);
      LinkResponse m;
      m.link_nonce = ReadNonce(r);
      m.public_key = ReadKey(r);
      m.attestation = ReadAssertion(r);
      out = std::move(m);
      break;
    }
    case Tag::kAccountActive: {
      r.ExpectTag(Tag::kAccountActive);
      out = AccountActive{r.Text("username", false)};
      break;
    }
    case Tag::kTransactionRequest:
      out = ReadTransactionRequest(r);
      break;
    case Tag::kTransactionOptions:
      out = ReadTransactionOptions(r);
      break;
    case Tag::kChallengeReply: {
      r.ExpectTag(Tag::kChallengeReply);
      ChallengeReply m;
      m.request = ReadTransactionRequest(r);
      m.options = ReadTransactionOptions(r);
      out = std::move(m);
      break;
    }
    case Tag::kAssertionResponse: {
      r.ExpectTag(Tag::kAssertionResponse);
      AssertionResponse m;
      m.username = r.Text("username", false);
      m.challenge = ReadNonce(r);
      m.assertion = ReadAssertion(r);
      out = std::move(m);
      break;
    }
    case Tag::kTransactionResult: {
      r.ExpectTag(Tag::kTransactionResult);
      TransactionResult m;
      m.username = r.Text("username", false);
      m.transaction_data = r.Text("transaction_data", true);
      m.accepted = r.Bool();
      out = std::move(m);
      break;
    }
    case Tag::kStatusReply: {
      r.ExpectTag(Tag::kStatusReply);
      StatusReply m;
      m.ok = r.Bool();
      m.detail = r.Text("detail", true);
      out = std::move(m);
      break;
    }
    case Tag::kAuthenticatorData:
      out = ReadAuthenticatorData(r);
      break;
    case Tag::kAssertion:
      out = ReadAssertion(r);
      break;
    default:
      r.Fail(r.offset(), "unknown message tag");
  }
  if (r.failed()) {
    return r.error();
  }
  return out;
}

}  // namespace

std::string DecodeError::ToString() const {
  return "malformed at offset " + std::to_string(offset) + ": " + reason;
}

Result<Bytes> Encode(const Message& message) {
  Writer w;
  std::visit([&w](const auto& m) { Write(w, m); }, message);
  if (w.error()) {
    return MakeError(ErrorCode::kInvalidInput,
                     std::string(MessageName(message)) + ": " + *w.error());
  }
  return std::move(w.out());
}

Result<Message, DecodeError> Decode(ByteSpan bytes) {
  if (bytes.empty()) {
    return DecodeError{0, "empty input"};
  }
  Reader r(bytes);
  auto message = ReadMessage(r);
  if (!message) {
    return message.error();
  }
  if (!r.AtEnd()) {
    return DecodeError{r.offset(), "trailing bytes"};
  }
  return message;
}

Result<Bytes> SignedPayload(const AuthenticatorData& auth_data,
                            const crypto::Nonce& challenge) {
  auto encoded = Encode(auth_data);
  if (!encoded) {
    return encoded.error();
  }
  Bytes payload = std::move(encoded).value();
  payload.insert(payload.end(), challenge.bytes.begin(),
                 challenge.bytes.end());
  return payload;
}

std::string_view MessageName(const Message& message) {
  static constexpr std::string_view kNames[] = {
      "RegistrationRequest", "RegistrationOptions", "RegistrationResponse",
      "LinkNonce",           "LinkResponse",        "AccountActive",
      "TransactionRequest",  "TransactionOptions",  "ChallengeReply",
      "AssertionResponse",   "TransactionResult",   "StatusReply",
      "AuthenticatorData",   "Assertion"};
  static_assert(std::size(kNames) == std::variant_size_v<Message>);
  return kNames[message.index()];
}

}  // namespace fido2d::messages
