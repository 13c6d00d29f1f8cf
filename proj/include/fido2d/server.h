#ifndef FIDO2D_SERVER_H_
#define FIDO2D_SERVER_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fido2d/crypto.h"
#include "fido2d/messages.h"
#include "fido2d/result.h"
#include "fido2d/trace.h"

namespace fido2d::server {

inline constexpr uint64_t kDefaultPendingStepBudget = 100;

struct ServerConfig {
  std::string server_id;
  // Pending transactions older than this many steps are aborted.
  uint64_t pending_step_budget = kDefaultPendingStepBudget;
};

struct Account {
  std::string username;
  std::optional<crypto::PublicKey> pub_b;
  std::optional<crypto::PublicKey> pub_a;
  std::optional<crypto::Nonce> registration_challenge;
  std::optional<messages::LinkNonce> link_nonce;
  uint32_t counter_b = 0;
  uint32_t counter_a = 0;

  bool active() const { return pub_b.has_value() && pub_a.has_value(); }
};

enum class PendingState { kAwaitingB, kAwaitingA, kComplete, kAborted };

std::string_view PendingStateName(PendingState state);

struct PendingTransaction {
  uint64_t id = 0;
  std::string username;
  std::string data;
  crypto::Nonce challenge_b;
  std::optional<crypto::Nonce> challenge_a;
  PendingState state = PendingState::kAwaitingB;
  uint64_t created_step = 0;
  std::string abort_reason;
};

// Append-only record of every verification decision, kept so the dual-proof
// and counter invariants can be re-checked from the outside.
struct AuditRecord {
  enum class Kind { kVerifiedB, kVerifiedA, kCompleted, kAborted };
  Kind kind;
  uint64_t pending_id = 0;
  std::string username;
  std::optional<crypto::PublicKey> key;
  Bytes signed_payload;
  crypto::Signature signature;
  uint32_t counter = 0;
};

// Which ceremony step a presented challenge belongs to.
enum class ChallengeRole { kUnknown, kTransactionB, kTransactionA };

// Relying party for registration (B then A via link nonce) and dual-device
// transaction authentication. A transaction completes only after a valid
// assertion from B over its challenge and one from A over the second
// challenge and the exact stored transaction text. Any failed check aborts
// the pending transaction and consumes its challenge.
class RelyingParty {
 public:
  RelyingParty(ServerConfig config, crypto::Rng rng,
               crypto::NonceRegistry& registry, EventSink sink = {});

  RelyingParty(const RelyingParty&) = delete;
  RelyingParty& operator=(const RelyingParty&) = delete;
  RelyingParty(RelyingParty&&) = default;

  const std::string& server_id() const { return config_.server_id; }

  Result<messages::RegistrationOptions> BeginRegistration(
      std::string_view username);
  Result<messages::LinkNonce> FinishRegistrationB(
      std::string_view username, const crypto::PublicKey& credential,
      const messages::Assertion& attestation);
  // Returns the username the link nonce was bound to.
  Result<std::string> FinishRegistrationA(
      const crypto::Nonce& link_nonce, const crypto::PublicKey& credential,
      const messages::Assertion& attestation);

  Result<messages::TransactionOptions> BeginTransaction(
      std::string_view username, std::string_view data);
  // On success returns the options for device A, carrying the second
  // challenge and the transaction text.
  Result<messages::TransactionOptions> FinishTransactionB(
      std::string_view username, const crypto::Nonce& challenge,
      const messages::Assertion& assertion);
  Result<Ok> FinishTransactionA(std::string_view username,
                                const crypto::Nonce& challenge,
                                const messages::Assertion& assertion);

  // Moves the server's clock; expires stale pending transactions.
  void AdvanceTo(uint64_t step);
  uint64_t step() const { return step_; }

  ChallengeRole Classify(const crypto::Nonce& challenge) const;

  const Account* FindAccount(std::string_view username) const;
  const PendingTransaction* FindPending(uint64_t id) const;
  // Only live (unconsumed) challenges resolve.
  const PendingTransaction* FindPendingByChallenge(
      const crypto::Nonce& challenge) const;
  const std::map<uint64_t, PendingTransaction>& pending() const {
    return pending_;
  }
  const std::vector<AuditRecord>& audit_log() const { return audit_; }

  // Re-checks the server's safety invariants from the audit log and current
  // state. Returns one line per violation; empty when all hold.
  std::vector<std::string> Audit() const;

 private:
  struct ChallengeSlot {
    uint64_t pending_id;
    ChallengeRole role;
  };

  Account* MutableAccount(std::string_view username);
  crypto::Nonce Fresh();
  void Abort(PendingTransaction& pending, std::string reason);
  // Takes the challenge out of the live table. Returns the slot if it was
  // live; a second call for the same challenge returns nullopt.
  std::optional<ChallengeSlot> Consume(const crypto::Nonce& challenge);
  Result<Ok> CheckAssertion(const crypto::PublicKey& key,
                            const messages::Assertion& assertion,
                            const crypto::Nonce& challenge,
                            std::optional<uint32_t> last_counter,
                            const std::optional<std::string>& expected_ext,
                            Bytes* signed_payload) const;
  void Emit(EventLabel label, std::string initiator, std::string transaction);

  ServerConfig config_;
  crypto::Rng rng_;
  crypto::NonceRegistry* registry_;
  EventSink sink_;
  uint64_t step_ = 0;
  uint64_t next_pending_id_ = 1;

  std::map<std::string, Account, std::less<>> accounts_;
  std::unordered_map<crypto::Nonce, std::string, crypto::NonceHash>
      link_nonces_;
  std::map<uint64_t, PendingTransaction> pending_;
  std::unordered_map<crypto::Nonce, ChallengeSlot, crypto::NonceHash>
      live_challenges_;
  std::unordered_set<crypto::Nonce, crypto::NonceHash> consumed_challenges_;
  std::vector<AuditRecord> audit_;
};

// Routes one decoded wire message to the relying party.
struct DispatchOutcome {
  // Answer for whoever sent the message.
  std::optional<messages::Message> reply;
  // Options for the device A of `push_username`, on the server->A channel.
  std::optional<messages::TransactionOptions> push;
  std::string push_username;
  std::optional<Error> error;
};

DispatchOutcome Dispatch(RelyingParty& server,
                         const messages::Message& message);

}  // namespace fido2d::server

#endif  // FIDO2D_SERVER_H_
