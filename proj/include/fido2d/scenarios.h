#ifndef FIDO2D_SCENARIOS_H_
#define FIDO2D_SCENARIOS_H_

#include <string>
#include <string_view>
#include <vector>

#include "fido2d/devices.h"
#include "fido2d/schedule.h"
#include "fido2d/world.h"

namespace fido2d::harness {

// Honest registration and one transaction, rules in their most direct
// order.
Schedule HonestScenario(uint64_t seed = 1);

// Malware on B swaps the transaction text: the user's request is dropped,
// the attacker's own request is answered with B's leaked key, and device A
// shows the attacker's text.
Schedule ManipulationScenario(devices::UserMode mode, uint64_t seed = 1);

// Malware on A tries to start a transaction of its own. Without B's key the
// first step cannot be passed.
Schedule InitiationScenario(uint64_t seed = 1);

// Both devices leaked: the attacker completes a transaction the user never
// began.
Schedule DualCompromiseScenario(uint64_t seed = 1);

// Real-time phishing relay against an honest user and devices.
Schedule PhishingRelayScenario(uint64_t seed = 1);

// One honest transaction, then every captured assertion is replayed both
// verbatim and re-pointed at a live challenge of a later transaction.
// Built by stepping a World so byte offsets come from the real messages.
Schedule ReplayScenario(uint64_t seed = 1);

struct NamedScenario {
  std::string name;
  Schedule schedule;
};
std::vector<NamedScenario> BuiltinScenarios();

}  // namespace fido2d::harness

#endif  // FIDO2D_SCENARIOS_H_
