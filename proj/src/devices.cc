#include "fido2d/devices.h"

#include <algorithm>

namespace fido2d::devices {

std::string_view UserModeName(UserMode mode) {
  return mode == UserMode::kCompare ? "compare" : "nocompare";
}

std::optional<UserMode> ParseUserMode(std::string_view text) {
  if (text == "compare") return UserMode::kCompare;
  if (text == "nocompare" || text == "no-compare") return UserMode::kNoCompare;
  return std::nullopt;
}

void UserModel::Initiate(std::string server_id, std::string data) {
  intents_.push_back(Intent{std::move(server_id), std::move(data)});
}

bool UserModel::Confirm(std::string_view server_id, std::string_view data) {
  auto it = intents_.begin();
  if (mode_ == UserMode::kCompare) {
    it = std::find_if(intents_.begin(), intents_.end(), [&](const Intent& i) {
      return i.server_id == server_id && i.data == data;
    });
  }
  if (it == intents_.end()) {
    return false;
  }
  intents_.erase(it);
  return true;
}

Authenticator::Authenticator(Role role, std::string username,
                             std::string server_id, EventSink sink)
    : role_(role),
      username_(std::move(username)),
      server_id_(std::move(server_id)),
      sink_(std::move(sink)) {}

std::optional<crypto::PublicKey> Authenticator::public_key() const {
  if (!credential_) return std::nullopt;
  return credential_->public_key;
}

CompromiseLeak Authenticator::Compromise() {
  compromised_ = true;
  if (sink_) {
    sink_(TraceEvent{role_ == Role::kB ? EventLabel::kCompromiseDev1
                                       : EventLabel::kCompromiseDev2,
                     username_, server_id_, "", 0});
  }
  return CompromiseLeak{credential_, counter_};
}

Result<crypto::PublicKey> Authenticator::CreateKey(crypto::Rng& rng) {
  const crypto::Seed seed = rng.NextSeed();
  auto key = crypto::Keygen(seed);
  if (!key) {
    return key.error();
  }
  credential_ = std::move(key).value();
  *counter_ = 0;
  return credential_->public_key;
}

Result<messages::Assertion> Authenticator::MakeAssertion(
    std::string server_id, std::optional<std::string> extension_data,
    const crypto::Nonce& challenge) {
  if (!credential_) {
    return MakeError(ErrorCode::kNoCredential);
  }
  messages::AuthenticatorData ad;
  ad.server_id = std::move(server_id);
  ad.counter = ++*counter_;
  // Honest devices sit behind a local lock; reaching this point means the
  // user unlocked and confirmed.
  ad.user_verified = true;
  ad.extension_data = std::move(extension_data);
  auto payload = messages::SignedPayload(ad, challenge);
  if (!payload) {
    return payload.error();
  }
  messages::Assertion assertion{ad,
                                crypto::Sign(credential_->secret, *payload)};
  signed_.push_back(SignedRecord{std::move(payload).value(),
                                 assertion.signature});
  return assertion;
}

DeviceB::DeviceB(std::string username, std::string server_id, EventSink sink)
    : Authenticator(Role::kB, std::move(username), std::move(server_id),
                    std::move(sink)) {}

Result<std::pair<crypto::PublicKey, messages::Assertion>>
DeviceB::CreateCredential(const messages::RegistrationOptions& options,
                          bool consent, crypto::Rng& rng) {
  if (!consent) {
    return MakeError(ErrorCode::kUserDeclined, "registration not confirmed");
  }
  auto key = CreateKey(rng);
  if (!key) {
    return key.error();
  }
  auto attestation =
      MakeAssertion(options.server_id, std::nullopt, options.challenge);
  if (!attestation) {
    return attestation.error();
  }
  return std::pair{*key, std::move(attestation).value()};
}

Result<messages::Assertion> DeviceB::SignChallenge(
    const messages::TransactionOptions& options, bool consent) {
  if (!has_credential()) {
    return MakeError(ErrorCode::kNoCredential);
  }
  if (!consent) {
    return MakeError(ErrorCode::kUserDeclined, "challenge not confirmed");
  }
  return MakeAssertion(options.server_id, std::nullopt, options.challenge);
}

void DeviceB::RecordRequest(std::string origin,
                            messages::TransactionRequest request) {
  outstanding_.push_back(Outstanding{std::move(origin), std::move(request)});
}

Result<messages::AssertionResponse> DeviceB::HandleChallengeReply(
    std::string_view origin, const messages::ChallengeReply& reply,
    bool consent) {
  auto it = std::find_if(
      outstanding_.begin(), outstanding_.end(), [&](const Outstanding& o) {
        return o.origin == origin && o.request == reply.request;
      });
  if (it == outstanding_.end()) {
    return MakeError(ErrorCode::kOriginMismatch,
                     "reply does not answer a request sent to '" +
                         std::string(origin) + "'");
  }
  if (reply.options.server_id != origin) {
    return MakeError(ErrorCode::kOriginMismatch,
                     "options name '" + reply.options.server_id +
                         "' but came from '" + std::string(origin) + "'");
  }
  if (reply.options.transaction_data) {
    return MakeError(ErrorCode::kInvalidInput,
                     "first-device options must not carry transaction text");
  }
  auto assertion = SignChallenge(reply.options, consent);
  if (!assertion) {
    return assertion.error();
  }
  outstanding_.erase(it);
  return messages::AssertionResponse{username(), reply.options.challenge,
                                     std::move(assertion).value()};
}

DeviceA::DeviceA(std::string username, std::string server_id, EventSink sink)
    : Authenticator(Role::kA, std::move(username), std::move(server_id),
                    std::move(sink)) {}

Result<messages::LinkResponse> DeviceA::Link(std::string_view link_nonce_text,
                                             bool consent, crypto::Rng& rng) {
  auto nonce = crypto::Nonce::FromHex(link_nonce_text);
  if (!nonce) {
    return MakeError(ErrorCode::kLinkInputError,
                     "link code must be " +
                         std::to_string(2 * crypto::kNonceSize) +
                         " hex digits");
  }
  if (!consent) {
    return MakeError(ErrorCode::kUserDeclined, "link not confirmed");
  }
  auto key = CreateKey(rng);
  if (!key) {
    return key.error();
  }
  auto attestation = MakeAssertion(server_id(), std::nullopt, *nonce);
  if (!attestation) {
    return attestation.error();
  }
  return messages::LinkResponse{*nonce, *key, std::move(attestation).value()};
}

Result<messages::Assertion> DeviceA::ConfirmTransaction(
    const messages::TransactionOptions& options, UserModel& user) {
  return ConfirmTransaction(
      options, [&user](std::string_view server_id, std::string_view text) {
        return user.Confirm(server_id, text);
      });
}

Result<messages::Assertion> DeviceA::ConfirmTransaction(
    const messages::TransactionOptions& options, const Decision& decide) {
  if (!has_credential()) {
    return MakeError(ErrorCode::kNoCredential);
  }
  if (!options.transaction_data) {
    return MakeError(ErrorCode::kInvalidInput,
                     "second-device options must carry transaction text");
  }
  if (options.server_id != server_id()) {
    return MakeError(ErrorCode::kOriginMismatch,
                     "options for '" + options.server_id +
                         "' but device is registered with '" + server_id() +
                         "'");
  }
  const bool confirmed = decide(options.server_id, *options.transaction_data);
  confirmations_.push_back(
      ConfirmationRecord{options.server_id, *options.transaction_data,
                         confirmed});
  if (!confirmed) {
    return MakeError(ErrorCode::kUserDeclined,
                     "user rejected '" + *options.transaction_data + "'");
  }
  return MakeAssertion(server_id(), options.transaction_data,
                       options.challenge);
}

}  // namespace fido2d::devices
