#include "fido2d/server.h"

#include <algorithm>
#include <set>
#include <utility>

namespace fido2d::server {

using messages::Assertion;

std::string_view PendingStateName(PendingState state) {
  switch (state) {
    case PendingState::kAwaitingB:
      return "AwaitingB";
    case PendingState::kAwaitingA:
      return "AwaitingA";
    case PendingState::kComplete:
      return "Complete";
    case PendingState::kAborted:
      return "Aborted";
  }
  return "?";
}

RelyingParty::RelyingParty(ServerConfig config, crypto::Rng rng,
                           crypto::NonceRegistry& registry, EventSink sink)
    : config_(std::move(config)),
      rng_(std::move(rng)),
      registry_(&registry),
      sink_(std::move(sink)) {}

Account* RelyingParty::MutableAccount(std::string_view username) {
  auto it = accounts_.find(username);
  return it == accounts_.end() ? nullptr : &it->second;
}

const Account* RelyingParty::FindAccount(std::string_view username) const {
  auto it = accounts_.find(username);
  return it == accounts_.end() ? nullptr : &it->second;
}

const PendingTransaction* RelyingParty::FindPending(uint64_t id) const {
  auto it = pending_.find(id);
  return it == pending_.end() ? nullptr : &it->second;
}

crypto::Nonce RelyingParty::Fresh() {
  return crypto::FreshNonce(rng_, *registry_);
}

void RelyingParty::Emit(EventLabel label, std::string initiator,
                        std::string transaction) {
  if (sink_) {
    sink_(TraceEvent{label, std::move(initiator), config_.server_id,
                     std::move(transaction), 0});
  }
}

Result<Ok> RelyingParty::CheckAssertion(
    const crypto::PublicKey& key, const Assertion& assertion,
    const crypto::Nonce& challenge, std::optional<uint32_t> last_counter,
    const std::optional<std::string>& expected_ext,
    Bytes* signed_payload) const {
  const auto& ad = assertion.auth_data;
  if (ad.server_id != config_.server_id) {
    return MakeError(ErrorCode::kInvalidInput,
                     "assertion bound to server '" + ad.server_id + "'");
  }
  if (!ad.user_verified) {
    return MakeError(ErrorCode::kInvalidInput, "user verification missing");
  }
  if (ad.extension_data != expected_ext) {
    return MakeError(ErrorCode::kInvalidInput,
                     expected_ext ? "signed transaction text differs"
                                  : "unexpected extension data");
  }
  if (last_counter && ad.counter <= *last_counter) {
    return MakeError(ErrorCode::kInvalidInput,
                     "signature counter did not increase (" +
                         std::to_string(ad.counter) +
                         " <= " + std::to_string(*last_counter) + ")");
  }
  auto payload = messages::SignedPayload(ad, challenge);
  if (!payload) {
    return payload.error();
  }
  if (!crypto::Verify(key, *payload, assertion.signature)) {
    return MakeError(ErrorCode::kInvalidInput, "bad signature");
  }
  if (signed_payload) {
    *signed_payload = std::move(payload).value();
  }
  return Ok{};
}

Result<messages::RegistrationOptions> RelyingParty::BeginRegistration(
    std::string_view username) {
  if (username.empty()) {
    return MakeError(ErrorCode::kRegistrationRefused, "empty username");
  }
  Account* account = MutableAccount(username);
  if (account && account->active()) {
    return MakeError(ErrorCode::kRegistrationRefused,
                     "account '" + std::string(username) + "' already active");
  }
  if (!account) {
    account = &accounts_[std::string(username)];
    account->username = std::string(username);
  }
  // A restart drops any earlier half-finished registration.
  if (account->link_nonce) {
    link_nonces_.erase(account->link_nonce->value);
    account->link_nonce.reset();
  }
  account->pub_b.reset();
  account->registration_challenge = Fresh();
  return messages::RegistrationOptions{*account->registration_challenge,
                                       config_.server_id,
                                       std::string(username)};
}

Result<messages::LinkNonce> RelyingParty::FinishRegistrationB(
    std::string_view username, const crypto::PublicKey& credential,
    const Assertion& attestation) {
  Account* account = MutableAccount(username);
  if (!account || !account->registration_challenge) {
    return MakeError(ErrorCode::kRegistrationFailed,
                     "no registration challenge outstanding");
  }
  const crypto::Nonce challenge = *account->registration_challenge;
  account->registration_challenge.reset();
  consumed_challenges_.insert(challenge);
  auto checked = CheckAssertion(credential, attestation, challenge,
                                std::nullopt, std::nullopt, nullptr);
  if (!checked) {
    return MakeError(ErrorCode::kRegistrationFailed, checked.error().detail);
  }
  account->pub_b = credential;
  account->counter_b = attestation.auth_data.counter;
  messages::LinkNonce link{Fresh(), account->username};
  account->link_nonce = link;
  link_nonces_[link.value] = account->username;
  return link;
}

Result<std::string> RelyingParty::FinishRegistrationA(
    const crypto::Nonce& link_nonce, const crypto::PublicKey& credential,
    const Assertion& attestation) {
  auto it = link_nonces_.find(link_nonce);
  if (it == link_nonces_.end()) {
    return MakeError(ErrorCode::kLinkFailed, "unknown or consumed link nonce");
  }
  std::string username = it->second;
  link_nonces_.erase(it);
  consumed_challenges_.insert(link_nonce);
  Account* account = MutableAccount(username);
  account->link_nonce.reset();
  auto checked = CheckAssertion(credential, attestation, link_nonce,
                                std::nullopt, std::nullopt, nullptr);
  if (!checked) {
    return MakeError(ErrorCode::kLinkFailed, checked.error().detail);
  }
  account->pub_a = credential;
  account->counter_a = attestation.auth_data.counter;
  Emit(EventLabel::kRegistered, username, "");
  return username;
}

Result<messages::TransactionOptions> RelyingParty::BeginTransaction(
    std::string_view username, std::string_view data) {
  const Account* account = FindAccount(username);
  if (!account || !account->active()) {
    return MakeError(ErrorCode::kTransactionRefused,
                     "account '" + std::string(username) + "' not active");
  }
  PendingTransaction pending;
  pending.id = next_pending_id_++;
  pending.username = std::string(username);
  pending.data = std::string(data);
  pending.challenge_b = Fresh();
  pending.created_step = step_;
  live_challenges_[pending.challenge_b] =
      ChallengeSlot{pending.id, ChallengeRole::kTransactionB};
  messages::TransactionOptions options{pending.challenge_b, config_.server_id,
                                       std::nullopt};
  pending_.emplace(pending.id, std::move(pending));
  return options;
}

std::optional<RelyingParty::ChallengeSlot> RelyingParty::Consume(
    const crypto::Nonce& challenge) {
  auto it = live_challenges_.find(challenge);
  if (it == live_challenges_.end()) {
    return std::nullopt;
  }
  ChallengeSlot slot = it->second;
  live_challenges_.erase(it);
  consumed_challenges_.insert(challenge);
  return slot;
}

void RelyingParty::Abort(PendingTransaction& pending, std::string reason) {
  if (pending.state == PendingState::kComplete ||
      pending.state == PendingState::kAborted) {
    return;
  }
  live_challenges_.erase(pending.challenge_b);
  consumed_challenges_.insert(pending.challenge_b);
  if (pending.challenge_a) {
    live_challenges_.erase(*pending.challenge_a);
    consumed_challenges_.insert(*pending.challenge_a);
  }
  pending.state = PendingState::kAborted;
  pending.abort_reason = std::move(reason);
  audit_.push_back(AuditRecord{AuditRecord::Kind::kAborted, pending.id,
                               pending.username, std::nullopt, {}, {}, 0});
}

const PendingTransaction* RelyingParty::FindPendingByChallenge(
    const crypto::Nonce& challenge) const {
  auto it = live_challenges_.find(challenge);
  return it == live_challenges_.end() ? nullptr
                                      : FindPending(it->second.pending_id);
}

ChallengeRole RelyingParty::Classify(const crypto::Nonce& challenge) const {
  auto it = live_challenges_.find(challenge);
  return it == live_challenges_.end() ? ChallengeRole::kUnknown
                                      : it->second.role;
}

Result<messages::TransactionOptions> RelyingParty::FinishTransactionB(
    std::string_view username, const crypto::Nonce& challenge,
    const Assertion& assertion) {
  auto live = live_challenges_.find(challenge);
  if (live == live_challenges_.end() ||
      live->second.role != ChallengeRole::kTransactionB) {
    return MakeError(ErrorCode::kUnknownChallenge,
                     "challenge unknown, stale or not a first-device "
                     "challenge");
  }
  const ChallengeSlot slot = *Consume(challenge);
  PendingTransaction& pending = pending_.at(slot.pending_id);
  auto fail = [&](std::string why) -> Result<messages::TransactionOptions> {
    Abort(pending, why);
    return MakeError(ErrorCode::kTransactionAborted, std::move(why));
  };
  if (pending.state != PendingState::kAwaitingB) {
    return fail("pending transaction not awaiting device B");
  }
  if (pending.username != username) {
    return fail("challenge belongs to a different account");
  }
  Account& account = *MutableAccount(pending.username);
  Bytes payload;
  auto checked = CheckAssertion(*account.pub_b, assertion, challenge,
                                account.counter_b, std::nullopt, &payload);
  if (!checked) {
    return fail("device B: " + checked.error().detail);
  }
  account.counter_b = assertion.auth_data.counter;
  audit_.push_back(AuditRecord{AuditRecord::Kind::kVerifiedB, pending.id,
                               pending.username, account.pub_b,
                               std::move(payload), assertion.signature,
                               assertion.auth_data.counter});
  pending.challenge_a = Fresh();
  pending.state = PendingState::kAwaitingA;
  live_challenges_[*pending.challenge_a] =
      ChallengeSlot{pending.id, ChallengeRole::kTransactionA};
  return messages::TransactionOptions{*pending.challenge_a, config_.server_id,
                                      pending.data};
}

Result<Ok> RelyingParty::FinishTransactionA(std::string_view username,
                                            const crypto::Nonce& challenge,
                                            const Assertion& assertion) {
  auto live = live_challenges_.find(challenge);
  if (live == live_challenges_.end() ||
      live->second.role != ChallengeRole::kTransactionA) {
    return MakeError(ErrorCode::kUnknownChallenge,
                     "challenge unknown, stale or not a second-device "
                     "challenge");
  }
  const ChallengeSlot slot = *Consume(challenge);
  PendingTransaction& pending = pending_.at(slot.pending_id);
  auto fail = [&](std::string why) -> Result<Ok> {
    Abort(pending, why);
    return MakeError(ErrorCode::kTransactionAborted, std::move(why));
  };
  if (pending.state != PendingState::kAwaitingA) {
    return fail("pending transaction not awaiting device A");
  }
  if (pending.username != username) {
    return fail("challenge belongs to a different account");
  }
  Account& account = *MutableAccount(pending.username);
  Bytes payload;
  auto checked = CheckAssertion(*account.pub_a, assertion, challenge,
                                account.counter_a, pending.data, &payload);
  if (!checked) {
    return fail("device A: " + checked.error().detail);
  }
  account.counter_a = assertion.auth_data.counter;
  audit_.push_back(AuditRecord{AuditRecord::Kind::kVerifiedA, pending.id,
                               pending.username, account.pub_a,
                               std::move(payload), assertion.signature,
                               assertion.auth_data.counter});
  pending.state = PendingState::kComplete;
  audit_.push_back(AuditRecord{AuditRecord::Kind::kCompleted, pending.id,
                               pending.username, std::nullopt, {}, {}, 0});
  Emit(EventLabel::kTransactionComplete, pending.username, pending.data);
  return Ok{};
}

void RelyingParty::AdvanceTo(uint64_t step) {
  step_ = std::max(step_, step);
  for (auto& [id, pending] : pending_) {
    if ((pending.state == PendingState::kAwaitingB ||
         pending.state == PendingState::kAwaitingA) &&
        step_ - pending.created_step >= config_.pending_step_budget) {
      Abort(pending, "expired");
    }
  }
}

std::vector<std::string> RelyingParty::Audit() const {
  std::vector<std::string> problems;
  auto tail_challenge = [](const Bytes& payload) {
    crypto::Nonce n;
    if (payload.size() >= crypto::kNonceSize) {
      std::copy(payload.end() - crypto::kNonceSize, payload.end(),
                n.bytes.begin());
    }
    return n;
  };

  std::set<crypto::Nonce> accepted;
  std::map<crypto::PublicKey, uint32_t> last_counter;
  std::set<uint64_t> aborted;
  std::map<uint64_t, std::pair<const AuditRecord*, const AuditRecord*>> proofs;
  for (const AuditRecord& rec : audit_) {
    const std::string where = "pending #" + std::to_string(rec.pending_id);
    switch (rec.kind) {
      case AuditRecord::Kind::kVerifiedB:
      case AuditRecord::Kind::kVerifiedA: {
        crypto::Nonce ch = tail_challenge(rec.signed_payload);
        if (!accepted.insert(ch).second) {
          problems.push_back(where + ": challenge accepted twice");
        }
        auto [it, fresh] = last_counter.try_emplace(*rec.key, rec.counter);
        if (!fresh) {
          if (rec.counter <= it->second) {
            problems.push_back(where + ": counter not strictly increasing");
          }
          it->second = rec.counter;
        }
        if (!crypto::Verify(*rec.key, rec.signed_payload, rec.signature)) {
          problems.push_back(where + ": recorded signature does not verify");
        }
        auto& slot = proofs[rec.pending_id];
        (rec.kind == AuditRecord::Kind::kVerifiedB ? slot.first
                                                   : slot.second) = &rec;
        break;
      }
      case AuditRecord::Kind::kAborted:
        aborted.insert(rec.pending_id);
        break;
      case AuditRecord::Kind::kCompleted:
        if (aborted.contains(rec.pending_id)) {
          problems.push_back(where + ": completed after abort");
        }
        break;
    }
  }

  for (const auto& [id, pending] : pending_) {
    if (pending.state != PendingState::kComplete) {
      continue;
    }
    const std::string where = "pending #" + std::to_string(id);
    const Account* account = FindAccount(pending.username);
    auto it = proofs.find(id);
    const AuditRecord* b = it == proofs.end() ? nullptr : it->second.first;
    const AuditRecord* a = it == proofs.end() ? nullptr : it->second.second;
    if (!b || !account || b->key != account->pub_b ||
        tail_challenge(b->signed_payload) != pending.challenge_b) {
      problems.push_back(where + ": complete without device-B proof");
    }
    if (!a || !account || a->key != account->pub_a || !pending.challenge_a ||
        tail_challenge(a->signed_payload) != *pending.challenge_a) {
      problems.push_back(where + ": complete without device-A proof");
      continue;
    }
    // The A proof must cover the stored transaction text.
    Bytes body(a->signed_payload.begin(),
               a->signed_payload.end() - crypto::kNonceSize);
    auto decoded = messages::Decode(body);
    const auto* ad = decoded ? std::get_if<messages::AuthenticatorData>(
                                   &decoded.value())
                             : nullptr;
    if (!ad || ad->extension_data != pending.data) {
      problems.push_back(where + ": device-A proof does not cover stored d");
    }
  }
  return problems;
}

namespace {

messages::StatusReply Status(const Error& error) {
  return messages::StatusReply{false, error.ToString()};
}

}  // namespace

DispatchOutcome Dispatch(RelyingParty& server,
                         const messages::Message& message) {
  DispatchOutcome out;
  auto failed = [&out](const Error& e) {
    out.error = e;
    out.reply = Status(e);
  };
  if (const auto* m = std::get_if<messages::RegistrationRequest>(&message)) {
    auto r = server.BeginRegistration(m->username);
    r ? void(out.reply = *r) : failed(r.error());
  } else if (const auto* m =
                 std::get_if<messages::RegistrationResponse>(&message)) {
    auto r =
        server.FinishRegistrationB(m->username, m->public_key, m->attestation);
    r ? void(out.reply = *r) : failed(r.error());
  } else if (const auto* m = std::get_if<messages::LinkResponse>(&message)) {
    auto r = server.FinishRegistrationA(m->link_nonce, m->public_key,
                                        m->attestation);
    r ? void(out.reply = messages::AccountActive{*r}) : failed(r.error());
  } else if (const auto* m =
                 std::get_if<messages::TransactionRequest>(&message)) {
    auto r = server.BeginTransaction(m->username, m->transaction_data);
    r ? void(out.reply = messages::ChallengeReply{*m, *r}) : failed(r.error());
  } else if (const auto* m =
                 std::get_if<messages::AssertionResponse>(&message)) {
    switch (server.Classify(m->challenge)) {
      case ChallengeRole::kTransactionB: {
        auto r =
            server.FinishTransactionB(m->username, m->challenge, m->assertion);
        if (r) {
          out.reply =
              messages::StatusReply{true, "awaiting confirmation on device A"};
          out.push = *r;
          out.push_username = m->username;
        } else {
          failed(r.error());
        }
        break;
      }
      case ChallengeRole::kTransactionA: {
        const std::string data =
            server.FindPendingByChallenge(m->challenge)->data;
        auto r =
            server.FinishTransactionA(m->username, m->challenge, m->assertion);
        if (r) {
          out.reply = messages::TransactionResult{m->username, data, true};
        } else {
          failed(r.error());
        }
        break;
      }
      case ChallengeRole::kUnknown:
        failed(MakeError(ErrorCode::kUnknownChallenge,
                         "challenge unknown or already used"));
        break;
    }
  } else {
    failed(MakeError(ErrorCode::kMalformed,
                     std::string("server does not accept ") +
                         std::string(messages::MessageName(message))));
  }
  return out;
}

}  // namespace fido2d::server
