#ifndef FIDO2D_WORLD_H_
#define FIDO2D_WORLD_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fido2d/adversary.h"
#include "fido2d/crypto.h"
#include "fido2d/devices.h"
#include "fido2d/result.h"
#include "fido2d/schedule.h"
#include "fido2d/server.h"
#include "fido2d/trace.h"

namespace fido2d::harness {

struct RunResult {
  Trace trace;
  // Structured log: a header line, then one line per action and per trace
  // event, in order.
  std::vector<std::string> log;
  // BLAKE2b-256 of the log text.
  std::string log_digest;
  std::vector<std::string> audit_failures;
  std::optional<std::string> internal_error;
  size_t aborts = 0;

  std::string LogText() const;
};

// Every party of one simulated run: honest servers, each account's two
// devices and user, the network and the attacker. Steps are applied one at
// a time; an action that cannot be carried out in the current state is
// logged and otherwise ignored.
class World {
 public:
  // Uses the schedule's seed and declarations; its steps are not applied.
  explicit World(const Schedule& header);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  void Apply(const Action& action);
  // Runs the end-of-run audits and hands back everything recorded.
  RunResult Finish();

  uint64_t step() const { return step_; }
  const Trace& trace() const { return trace_; }
  const adversary::Network& network() const { return network_; }
  const adversary::Adversary& attacker() const { return adversary_; }
  bool has_server(std::string_view id) const;
  bool registered(std::string_view account) const;
  bool compromised(std::string_view account, devices::Role role) const;
  // Decoded history entry, if it decodes.
  std::optional<messages::Message> Peek(uint64_t id) const;

 private:
  struct AccountState {
    AccountState(const AccountDecl& decl, EventSink sink, crypto::Rng rb,
                 crypto::Rng ra);
    AccountDecl decl;
    devices::DeviceB b;
    devices::DeviceA a;
    devices::UserModel user;
    crypto::Rng rng_b;
    crypto::Rng rng_a;
    bool registered = false;
  };

  Result<std::string> Execute(const Action& action);
  Result<uint64_t> Resolve(const Selector& selector) const;
  Result<messages::Message> Load(const Selector& selector) const;
  AccountState* FindAccount(std::string_view name);
  const PhisherDecl* FindPhisher(std::string_view id) const;
  Bytes EncodeOrDie(const messages::Message& message) const;

  Result<std::string> NewServer(const std::string& id);
  Result<std::string> Register(AccountState& acc);
  Result<std::string> Initiate(AccountState& acc, const std::string& data);
  Result<std::string> Phish(AccountState& acc,
                            const PhisherDecl& phisher,
                            const std::string& data);
  Result<std::string> Deliver(uint64_t id);
  Result<std::string> DeliverToServer(const adversary::Envelope& env,
                                      server::RelyingParty& server);
  Result<std::string> DeliverToB(const adversary::Envelope& env,
                                 AccountState& acc);
  Result<std::string> DeliverToA(const adversary::Envelope& env,
                                 AccountState& acc);
  Result<std::string> Forge(const Action& action, AccountState& acc);
  Result<std::string> PhishRelay(const Action& action,
                                 const PhisherDecl& phisher);
  Result<std::string> PhishAnswer(const Action& action,
                                  const PhisherDecl& phisher);
  Result<std::string> Compromise(AccountState& acc, devices::Role role);
  std::optional<std::string> WebOrigin(const adversary::Endpoint& e) const;

  void Emit(TraceEvent event);

  Schedule header_;
  crypto::Rng rng_;
  crypto::NonceRegistry registry_;
  uint64_t step_ = 0;
  std::map<std::string, std::unique_ptr<server::RelyingParty>, std::less<>>
      servers_;
  std::map<std::string, std::unique_ptr<AccountState>, std::less<>> accounts_;
  adversary::Network network_;
  adversary::Adversary adversary_;
  Trace trace_;
  std::vector<std::string> log_;
  size_t aborts_ = 0;
};

// Validates, then applies every step. Identical schedules give identical
// results, down to the log bytes.
Result<RunResult> Run(const Schedule& schedule);

}  // namespace fido2d::harness

#endif  // FIDO2D_WORLD_H_
