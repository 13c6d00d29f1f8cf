#include "fido2d/adversary.h"

#include <algorithm>

namespace fido2d::adversary {
namespace {

constexpr std::string_view kPrefixes[] = {"server:", "phisher:", "b:", "a:"};

crypto::KeyPair AttackerKey(crypto::Rng& rng) {
  const crypto::Seed seed = rng.NextSeed();
  return crypto::Keygen(seed).value();
}

}  // namespace

std::optional<Endpoint> Endpoint::Parse(std::string_view text) {
  if (text == "adversary") {
    return Attacker();
  }
  for (size_t i = 0; i < std::size(kPrefixes); ++i) {
    const std::string_view prefix = kPrefixes[i];
    if (text.substr(0, prefix.size()) == prefix &&
        text.size() > prefix.size()) {
      return Endpoint{static_cast<EndpointKind>(i),
                      std::string(text.substr(prefix.size()))};
    }
  }
  return std::nullopt;
}

Endpoint Endpoint::Server(std::string id) {
  return {EndpointKind::kServer, std::move(id)};
}
Endpoint Endpoint::Phisher(std::string id) {
  return {EndpointKind::kPhisher, std::move(id)};
}
Endpoint Endpoint::DeviceB(std::string account) {
  return {EndpointKind::kDeviceB, std::move(account)};
}
Endpoint Endpoint::DeviceA(std::string account) {
  return {EndpointKind::kDeviceA, std::move(account)};
}
Endpoint Endpoint::Attacker() { return {EndpointKind::kAdversary, ""}; }

std::string Endpoint::ToString() const {
  if (kind == EndpointKind::kAdversary) {
    return "adversary";
  }
  return std::string(kPrefixes[static_cast<size_t>(kind)]) + name;
}

std::string_view ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kSend:
      return "send";
    case Provenance::kReplay:
      return "replay";
    case Provenance::kForward:
      return "forward";
    case Provenance::kModify:
      return "modify";
    case Provenance::kInject:
      return "inject";
  }
  return "unknown";
}

namespace {

bool IsDevice(const Endpoint& e) {
  return e.kind == EndpointKind::kDeviceB || e.kind == EndpointKind::kDeviceA;
}

}  // namespace

uint64_t Network::Append(Envelope envelope) {
  envelope.id = history_.size();
  if (!envelope.destination.attacker_owned()) {
    in_flight_.insert(envelope.id);
  }
  history_.push_back(std::move(envelope));
  return history_.back().id;
}

uint64_t Network::Send(Endpoint origin, Endpoint destination, Bytes bytes) {
  Envelope e;
  e.authentic = origin.kind == EndpointKind::kServer && IsDevice(destination);
  e.origin = std::move(origin);
  e.destination = std::move(destination);
  e.bytes = std::move(bytes);
  e.provenance = Provenance::kSend;
  return Append(std::move(e));
}

Result<uint64_t> Network::Inject(Endpoint origin, Endpoint destination,
                                 Bytes bytes) {
  if (origin.kind == EndpointKind::kServer) {
    return MakeError(ErrorCode::kChannelViolation,
                     "cannot originate messages as " + origin.ToString());
  }
  Envelope e;
  e.origin = std::move(origin);
  e.destination = std::move(destination);
  e.bytes = std::move(bytes);
  e.provenance = Provenance::kInject;
  return Append(std::move(e));
}

const Envelope* Network::Find(uint64_t id) const {
  return id < history_.size() ? &history_[id] : nullptr;
}

Result<uint64_t> Network::Replay(uint64_t id) {
  const Envelope* src = Find(id);
  if (!src) {
    return MakeError(ErrorCode::kInvalidInput,
                     "no message #" + std::to_string(id));
  }
  Envelope e = *src;
  e.provenance = Provenance::kReplay;
  e.source = id;
  return Append(std::move(e));
}

Result<uint64_t> Network::Forward(uint64_t id, Endpoint destination) {
  const Envelope* src = Find(id);
  if (!src) {
    return MakeError(ErrorCode::kInvalidInput,
                     "no message #" + std::to_string(id));
  }
  Envelope e = *src;
  // Origin and content survive; only delivery to a device keeps the
  // authentic mark.
  e.authentic = src->authentic && IsDevice(destination);
  e.destination = std::move(destination);
  e.provenance = Provenance::kForward;
  e.source = id;
  return Append(std::move(e));
}

Result<uint64_t> Network::Modify(uint64_t id, size_t offset, ByteSpan patch) {
  if (!in_flight(id)) {
    return MakeError(ErrorCode::kInvalidInput,
                     "message #" + std::to_string(id) + " is not in flight");
  }
  const Envelope& src = history_[id];
  if (src.authentic) {
    return MakeError(ErrorCode::kChannelViolation,
                     "message #" + std::to_string(id) +
                         " is on an authentic channel");
  }
  Envelope e = src;
  if (offset + patch.size() > e.bytes.size()) {
    e.bytes.resize(offset + patch.size());
  }
  std::copy(patch.begin(), patch.end(), e.bytes.begin() + offset);
  e.provenance = Provenance::kModify;
  e.source = id;
  in_flight_.erase(id);
  return Append(std::move(e));
}

Result<Ok> Network::Drop(uint64_t id) {
  if (in_flight_.erase(id) == 0) {
    return MakeError(ErrorCode::kInvalidInput,
                     "message #" + std::to_string(id) + " is not in flight");
  }
  return Ok{};
}

Result<Envelope> Network::Take(uint64_t id) {
  if (in_flight_.erase(id) == 0) {
    return MakeError(ErrorCode::kInvalidInput,
                     "message #" + std::to_string(id) + " is not in flight");
  }
  return history_[id];
}

std::vector<uint64_t> Network::InFlight() const {
  return {in_flight_.begin(), in_flight_.end()};
}

std::optional<uint64_t> Network::NextTo(const Endpoint& destination) const {
  for (uint64_t id : in_flight_) {
    if (history_[id].destination == destination) {
      return id;
    }
  }
  return std::nullopt;
}

std::optional<uint64_t> Network::LastTo(const Endpoint& destination) const {
  for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
    if (it->destination == destination) {
      return it->id;
    }
  }
  return std::nullopt;
}

std::vector<std::string> Network::Audit() const {
  std::vector<std::string> out;
  for (const Envelope& e : history_) {
    if (!e.authentic) {
      continue;
    }
    // Walk back to the honest send this envelope was copied from.
    const Envelope* root = &e;
    while (root->source) {
      root = &history_[*root->source];
    }
    if (root->provenance != Provenance::kSend || !root->authentic ||
        root->origin != e.origin || root->bytes != e.bytes) {
      out.push_back("authentic message #" + std::to_string(e.id) +
                    " does not reproduce an honest send by " +
                    e.origin.ToString());
    }
  }
  return out;
}

Adversary::Adversary(crypto::Rng rng) : own_key_(AttackerKey(rng)) {}

void Adversary::Observe(const Network& network) {
  const auto& history = network.history();
  for (; observed_ < history.size(); ++observed_) {
    Learn(history[observed_].bytes);
  }
}

void Adversary::Learn(Bytes bytes) { knowledge_.insert(std::move(bytes)); }

bool Adversary::Knows(ByteSpan bytes) const {
  return knowledge_.count(Bytes(bytes.begin(), bytes.end())) != 0;
}

void Adversary::AddLeak(const std::string& account, devices::Role role,
                        devices::CompromiseLeak leak) {
  leaks_.insert_or_assign({account, role}, std::move(leak));
}

const devices::CompromiseLeak* Adversary::Leak(const std::string& account,
                                               devices::Role role) const {
  auto it = leaks_.find({account, role});
  return it == leaks_.end() ? nullptr : &it->second;
}

bool Adversary::HasKey(const std::string& account, devices::Role role) const {
  const auto* leak = Leak(account, role);
  return leak && leak->key.has_value();
}

Result<messages::Assertion> Adversary::Forge(
    const std::string& account, devices::Role role, std::string server_id,
    std::optional<std::string> extension, const crypto::Nonce& challenge) {
  const auto* leak = Leak(account, role);
  const bool leaked = leak && leak->key;
  messages::AuthenticatorData ad;
  ad.server_id = std::move(server_id);
  if (leaked) {
    ad.counter = ++*leak->counter;
  } else {
    ad.counter = 1;
  }
  ad.user_verified = true;
  ad.extension_data = std::move(extension);
  auto payload = messages::SignedPayload(ad, challenge);
  if (!payload) {
    return payload.error();
  }
  const crypto::KeyPair& key = leaked ? *leak->key : own_key_;
  crypto::Signature sig = crypto::Sign(key.secret, *payload);
  forged_.push_back(ForgedSignature{key.public_key, *payload, sig});
  return messages::Assertion{std::move(ad), std::move(sig)};
}

void Adversary::AddPhisher(Phisher phisher) {
  std::string id = phisher.id;
  phishers_.insert_or_assign(std::move(id), std::move(phisher));
}

const Phisher* Adversary::FindPhisher(std::string_view id) const {
  auto it = phishers_.find(id);
  return it == phishers_.end() ? nullptr : &it->second;
}

namespace {

struct SignedClaim {
  Bytes payload;
  const crypto::Signature* signature;
};

void CollectClaims(const messages::Message& m, std::vector<SignedClaim>& out) {
  auto add = [&](const messages::Assertion& a, const crypto::Nonce& ch) {
    auto payload = messages::SignedPayload(a.auth_data, ch);
    if (payload) {
      out.push_back(SignedClaim{std::move(payload).value(), &a.signature});
    }
  };
  if (const auto* r = std::get_if<messages::AssertionResponse>(&m)) {
    add(r->assertion, r->challenge);
  } else if (const auto* l = std::get_if<messages::LinkResponse>(&m)) {
    add(l->attestation, l->link_nonce);
  }
}

}  // namespace

std::vector<std::string> AuditKnowledge(const Adversary& adversary,
                                        const std::vector<HonestKey>& keys) {
  // Ed25519 is deterministic, so a signature someone actually produced names
  // its signer and payload. Only signatures nobody produced need verifying
  // against every unleaked key.
  struct Producer {
    const crypto::PublicKey* key;
    const Bytes* payload;
    const HonestKey* honest;
  };
  std::map<Bytes, Producer> producers;
  for (const HonestKey& k : keys) {
    if (!k.records) continue;
    for (const auto& r : *k.records) {
      producers.emplace(r.signature.bytes, Producer{&k.key, &r.payload, &k});
    }
  }
  for (const auto& f : adversary.forged()) {
    producers.emplace(f.signature.bytes, Producer{&f.key, &f.payload, nullptr});
  }
  auto unleaked = [&](const crypto::PublicKey& key) -> const HonestKey* {
    for (const HonestKey& k : keys) {
      if (k.key == key && !k.leaked) return &k;
    }
    return nullptr;
  };

  std::vector<std::string> out;
  std::set<std::pair<Bytes, Bytes>> checked;
  for (const Bytes& known : adversary.knowledge()) {
    auto decoded = messages::Decode(known);
    if (!decoded) continue;
    std::vector<SignedClaim> claims;
    CollectClaims(*decoded, claims);
    for (const SignedClaim& c : claims) {
      if (!checked.insert({c.payload, c.signature->bytes}).second) continue;
      auto it = producers.find(c.signature->bytes);
      if (it != producers.end()) {
        const Producer& p = it->second;
        if (!p.honest && unleaked(*p.key)) {
          out.push_back("attacker signed under unleaked key " +
                        unleaked(*p.key)->label);
        }
        if (*p.payload == c.payload) continue;
        // A real signature glued to different bytes.
        if (const HonestKey* k = unleaked(*p.key);
            k && crypto::Verify(k->key, c.payload, *c.signature)) {
          out.push_back("signature under unleaked key " + k->label +
                        " verifies over a payload its owner never signed");
        }
        continue;
      }
      for (const HonestKey& k : keys) {
        if (!k.leaked && crypto::Verify(k.key, c.payload, *c.signature)) {
          out.push_back("signature under unleaked key " + k.label +
                        " verifies over a payload its owner never signed");
        }
      }
    }
  }
  return out;
}

}  // namespace fido2d::adversary
