#ifndef FIDO2D_ADVERSARY_H_
#define FIDO2D_ADVERSARY_H_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fido2d/crypto.h"
#include "fido2d/devices.h"
#include "fido2d/messages.h"
#include "fido2d/result.h"

namespace fido2d::adversary {

enum class EndpointKind { kServer, kPhisher, kDeviceB, kDeviceA, kAdversary };

// Network address. Text form: "server:<id>", "phisher:<id>", "b:<account>",
// "a:<account>" or "adversary".
struct Endpoint {
  EndpointKind kind = EndpointKind::kAdversary;
  std::string name;

  static std::optional<Endpoint> Parse(std::string_view text);
  static Endpoint Server(std::string id);
  static Endpoint Phisher(std::string id);
  static Endpoint DeviceB(std::string account);
  static Endpoint DeviceA(std::string account);
  static Endpoint Attacker();

  std::string ToString() const;
  // Destinations owned by the attacker receive nothing in flight; their
  // traffic lands in knowledge directly.
  bool attacker_owned() const {
    return kind == EndpointKind::kPhisher || kind == EndpointKind::kAdversary;
  }
  bool operator==(const Endpoint&) const = default;
};

enum class Provenance { kSend, kReplay, kForward, kModify, kInject };

std::string_view ProvenanceName(Provenance p);

struct Envelope {
  uint64_t id = 0;
  Endpoint origin;
  Endpoint destination;
  Bytes bytes;
  // Server to device. Readable, droppable, replayable and redirectable, but
  // never altered and never originated by the attacker.
  bool authentic = false;
  Provenance provenance = Provenance::kSend;
  std::optional<uint64_t> source;
};

// Deterministic message queue. Every envelope ever created stays in the
// history under its id; in-flight envelopes await delivery.
class Network {
 public:
  // Honest send. Authentic iff server to device.
  uint64_t Send(Endpoint origin, Endpoint destination, Bytes bytes);

  Result<uint64_t> Inject(Endpoint origin, Endpoint destination, Bytes bytes);
  Result<uint64_t> Replay(uint64_t id);
  Result<uint64_t> Forward(uint64_t id, Endpoint destination);
  // Overwrites bytes from `offset` (extending if needed) in an in-flight,
  // non-authentic envelope. The original is withdrawn.
  Result<uint64_t> Modify(uint64_t id, size_t offset, ByteSpan patch);
  Result<Ok> Drop(uint64_t id);
  // Removes an in-flight envelope for delivery.
  Result<Envelope> Take(uint64_t id);

  const std::vector<Envelope>& history() const { return history_; }
  const Envelope* Find(uint64_t id) const;
  bool in_flight(uint64_t id) const { return in_flight_.count(id) != 0; }
  std::vector<uint64_t> InFlight() const;
  // Oldest in-flight envelope to `destination`.
  std::optional<uint64_t> NextTo(const Endpoint& destination) const;
  // Newest envelope in the history addressed to `destination`.
  std::optional<uint64_t> LastTo(const Endpoint& destination) const;

  // Authentic envelopes must carry bytes an honest server sent, under that
  // server's name. One line per violation.
  std::vector<std::string> Audit() const;

 private:
  uint64_t Append(Envelope envelope);

  std::vector<Envelope> history_;
  std::set<uint64_t> in_flight_;
};

struct Phisher {
  std::string id;
  std::string fake_server_id;
  std::string target_server;
};

// The Dolev-Yao attacker: everything sent is observed, leaked keys are held,
// and forging uses only keys it holds.
class Adversary {
 public:
  explicit Adversary(crypto::Rng rng);

  // Pulls every history entry not yet seen into knowledge.
  void Observe(const Network& network);
  void Learn(Bytes bytes);
  bool Knows(ByteSpan bytes) const;
  size_t knowledge_size() const { return knowledge_.size(); }
  const std::set<Bytes>& knowledge() const { return knowledge_; }

  void AddLeak(const std::string& account, devices::Role role,
               devices::CompromiseLeak leak);
  const devices::CompromiseLeak* Leak(const std::string& account,
                                      devices::Role role) const;
  bool HasKey(const std::string& account, devices::Role role) const;

  const crypto::KeyPair& own_key() const { return own_key_; }

  // Builds and signs an assertion for the account's device. Uses the leaked
  // key and bumps the shared counter if one is held; otherwise signs with
  // the attacker's own key.
  Result<messages::Assertion> Forge(const std::string& account,
                                    devices::Role role,
                                    std::string server_id,
                                    std::optional<std::string> extension,
                                    const crypto::Nonce& challenge);

  void AddPhisher(Phisher phisher);
  const Phisher* FindPhisher(std::string_view id) const;
  const std::map<std::string, Phisher, std::less<>>& phishers() const {
    return phishers_;
  }

  struct ForgedSignature {
    crypto::PublicKey key;
    Bytes payload;
    crypto::Signature signature;
  };
  const std::vector<ForgedSignature>& forged() const { return forged_; }

 private:
  crypto::KeyPair own_key_;
  std::set<Bytes> knowledge_;
  size_t observed_ = 0;
  std::map<std::pair<std::string, devices::Role>, devices::CompromiseLeak>
      leaks_;
  std::map<std::string, Phisher, std::less<>> phishers_;
  std::vector<ForgedSignature> forged_;
};

// An honest credential as the audit sees it.
struct HonestKey {
  std::string label;
  crypto::PublicKey key;
  bool leaked = false;
  const std::vector<devices::SignedRecord>* records = nullptr;
};

// Perfect-cryptography audit: no known message may carry a signature that
// verifies under an unleaked honest key over a payload its owner never
// signed. One line per violation.
std::vector<std::string> AuditKnowledge(const Adversary& adversary,
                                        const std::vector<HonestKey>& keys);

}  // namespace fido2d::adversary

#endif  // FIDO2D_ADVERSARY_H_
