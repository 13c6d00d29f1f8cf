#ifndef FIDO2D_DEVICES_H_
#define FIDO2D_DEVICES_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fido2d/crypto.h"
#include "fido2d/messages.h"
#include "fido2d/result.h"
#include "fido2d/trace.h"

namespace fido2d::devices {

enum class Role { kB, kA };

enum class UserMode { kCompare, kNoCompare };

std::string_view UserModeName(UserMode mode);
std::optional<UserMode> ParseUserMode(std::string_view text);

// What the user meant to do: the transaction text typed on B and the
// service it was typed into.
struct Intent {
  std::string server_id;
  std::string data;
  bool operator==(const Intent&) const = default;
};

// The human. Each initiation leaves one outstanding intent; each
// confirmation on device A consumes one.
class UserModel {
 public:
  explicit UserModel(UserMode mode) : mode_(mode) {}

  UserMode mode() const { return mode_; }
  void Initiate(std::string server_id, std::string data);
  // Compare: confirms only if (server, text) shown on A equals an
  // outstanding intent. NoCompare: confirms if any intent is outstanding.
  bool Confirm(std::string_view server_id, std::string_view data);
  const std::vector<Intent>& intents() const { return intents_; }

 private:
  UserMode mode_;
  std::vector<Intent> intents_;
};

struct SignedRecord {
  Bytes payload;
  crypto::Signature signature;
};

// Key material handed to the adversary on compromise. The counter is shared
// with the device: malware drives the real authenticator.
struct CompromiseLeak {
  std::optional<crypto::KeyPair> key;
  std::shared_ptr<uint32_t> counter;
};

// State shared by both device roles: one credential for one account at one
// relying party, a monotone signature counter, and the compromise flag.
class Authenticator {
 public:
  Authenticator(Role role, std::string username, std::string server_id,
                EventSink sink);

  Role role() const { return role_; }
  const std::string& username() const { return username_; }
  const std::string& server_id() const { return server_id_; }
  bool has_credential() const { return credential_.has_value(); }
  std::optional<crypto::PublicKey> public_key() const;
  uint32_t counter() const { return *counter_; }
  bool compromised() const { return compromised_; }

  // Leaks the credential (if any) and emits CompromiseDev1/CompromiseDev2.
  CompromiseLeak Compromise();

  // Everything this device has signed, in order.
  const std::vector<SignedRecord>& signed_records() const {
    return signed_;
  }

 protected:
  Result<crypto::PublicKey> CreateKey(crypto::Rng& rng);
  // Bumps the counter and signs Encode(auth_data) || challenge.
  Result<messages::Assertion> MakeAssertion(
      std::string server_id, std::optional<std::string> extension_data,
      const crypto::Nonce& challenge);

 private:
  Role role_;
  std::string username_;
  std::string server_id_;
  EventSink sink_;
  std::optional<crypto::KeyPair> credential_;
  std::shared_ptr<uint32_t> counter_ = std::make_shared<uint32_t>(0);
  bool compromised_ = false;
  std::vector<SignedRecord> signed_;
};

// Device B: the machine running the browser. Also tracks the transaction
// requests the browser has sent and not yet had answered, so it signs only
// challenges that answer one of its own requests.
class DeviceB : public Authenticator {
 public:
  DeviceB(std::string username, std::string server_id, EventSink sink = {});

  Result<std::pair<crypto::PublicKey, messages::Assertion>> CreateCredential(
      const messages::RegistrationOptions& options, bool consent,
      crypto::Rng& rng);

  // User confirmation is blind to the transaction text; options never
  // carry it.
  Result<messages::Assertion> SignChallenge(
      const messages::TransactionOptions& options, bool consent);

  // Browser bookkeeping for a request sent to `origin`.
  void RecordRequest(std::string origin,
                     messages::TransactionRequest request);
  // Pairs a reply from `origin` with an outstanding request to that origin,
  // checks the options' server id against the origin, then signs. The
  // request is consumed on success.
  Result<messages::AssertionResponse> HandleChallengeReply(
      std::string_view origin, const messages::ChallengeReply& reply,
      bool consent);
  size_t outstanding_requests() const { return outstanding_.size(); }

 private:
  struct Outstanding {
    std::string origin;
    messages::TransactionRequest request;
  };
  std::vector<Outstanding> outstanding_;
};

struct ConfirmationRecord {
  std::string displayed_server;
  std::string displayed_data;
  bool confirmed = false;
};

// Device A: the additional device with its own display.
class DeviceA : public Authenticator {
 public:
  DeviceA(std::string username, std::string server_id, EventSink sink = {});

  // Registration keyed by the link nonce text (hex) carried over from B.
  Result<messages::LinkResponse> Link(std::string_view link_nonce_text,
                                      bool consent, crypto::Rng& rng);

  // Shows (server, text) to the user and signs the second challenge together
  // with the text if the user model confirms.
  Result<messages::Assertion> ConfirmTransaction(
      const messages::TransactionOptions& options, UserModel& user);
  using Decision =
      std::function<bool(std::string_view server_id, std::string_view text)>;
  Result<messages::Assertion> ConfirmTransaction(
      const messages::TransactionOptions& options, const Decision& decide);

  const std::vector<ConfirmationRecord>& confirmations() const {
    return confirmations_;
  }

 private:
  std::vector<ConfirmationRecord> confirmations_;
};

}  // namespace fido2d::devices

#endif  // FIDO2D_DEVICES_H_
