#include "fido2d/scenarios.h"

#include <algorithm>
#include <stdexcept>

namespace fido2d::harness {
namespace {

Schedule FromText(std::string_view text, uint64_t seed) {
  auto s = ParseSchedule(text);
  if (!s) throw std::logic_error("built-in scenario: " + s.error().ToString());
  s->seed = seed;
  return std::move(s).value();
}

Action Step(std::string_view line) {
  auto a = Action::Parse(line);
  if (!a) throw std::logic_error("built-in step: " + a.error().ToString());
  return std::move(a).value();
}

}  // namespace

Schedule HonestScenario(uint64_t seed) {
  return FromText(R"(
account alice s0 compare
new_server s0
register alice
initiate alice "pay 10 to bob"
deliver next@server:s0
deliver next@b:alice
deliver next@server:s0
deliver next@a:alice
deliver next@server:s0
)",
                  seed);
}

Schedule ManipulationScenario(devices::UserMode mode, uint64_t seed) {
  Schedule s = FromText(R"(
account alice s0 compare
new_server s0
register alice
compromise alice b
initiate alice "pay 10 to bob"
drop next@server:s0
inject_request alice "pay 1000 to mallory"
deliver next@server:s0
forge_b alice last@adversary
deliver next@server:s0
deliver next@a:alice
deliver next@server:s0
)",
                        seed);
  s.accounts[0].mode = mode;
  if (mode == devices::UserMode::kCompare) {
    // A declined, so no A assertion is in flight; without A's key the
    // attacker's own attempt fails the second verification.
    s.steps.pop_back();
    s.steps.push_back(Step("forge_a alice last@a:alice"));
    s.steps.push_back(Step("deliver next@server:s0"));
  }
  return s;
}

Schedule InitiationScenario(uint64_t seed) {
  return FromText(R"(
account alice s0 nocompare
new_server s0
register alice
compromise alice a
inject_request alice "pay 1000 to mallory" as b:alice
deliver next@server:s0
deliver next@b:alice
inject_request alice "pay 1000 to mallory"
deliver next@server:s0
forge_b alice last@adversary
deliver next@server:s0
)",
                  seed);
}

Schedule DualCompromiseScenario(uint64_t seed) {
  return FromText(R"(
account alice s0 compare
new_server s0
register alice
compromise alice b
compromise alice a
inject_request alice "pay 1000 to mallory"
deliver next@server:s0
forge_b alice last@adversary
deliver next@server:s0
forge_a alice last@a:alice
drop next@a:alice
deliver next@server:s0
)",
                  seed);
}

Schedule PhishingRelayScenario(uint64_t seed) {
  return FromText(R"(
phisher p0 s0-login s0
account alice s0 nocompare
new_server s0
register alice
phish alice p0 "pay 10 to bob"
phish_relay p0 last@phisher:p0 "pay 1000 to mallory"
deliver next@server:s0
phish_answer p0 6 last@phisher:p0
deliver next@b:alice
phish_answer p0 6 last@phisher:p0 rebind
deliver next@b:alice
forward last@phisher:p0 server:s0
deliver next@server:s0
)",
                  seed);
}

Schedule ReplayScenario(uint64_t seed) {
  Schedule s = HonestScenario(seed);
  World world(s);
  for (const auto& a : s.steps) world.Apply(a);
  auto step = [&](const Action& a) {
    s.steps.push_back(a);
    world.Apply(a);
  };
  auto step_text = [&](std::string_view line) { step(Step(line)); };

  // The two assertions of the completed transaction.
  const auto& history = world.network().history();
  std::vector<uint64_t> assertions;
  for (const auto& e : history) {
    auto m = world.Peek(e.id);
    if (m && std::holds_alternative<messages::AssertionResponse>(*m)) {
      assertions.push_back(e.id);
    }
  }
  if (assertions.size() != 2) {
    throw std::logic_error("replay scenario: honest run went wrong");
  }

  // Re-points a replayed copy of `old` at `live` by patching the challenge
  // bytes in place.
  auto retarget = [&](uint64_t old, const crypto::Nonce& live) {
    Action replay;
    replay.kind = ActionKind::kReplay;
    replay.sel = Selector::Index(old);
    step(replay);
    const uint64_t copy = world.network().history().size() - 1;
    const auto response =
        std::get<messages::AssertionResponse>(*world.Peek(old));
    const Bytes& bytes = world.network().Find(copy)->bytes;
    auto at = std::search(bytes.begin(), bytes.end(),
                          response.challenge.bytes.begin(),
                          response.challenge.bytes.end());
    Action modify;
    modify.kind = ActionKind::kModify;
    modify.sel = Selector::Index(copy);
    modify.offset = static_cast<size_t>(at - bytes.begin());
    modify.patch.assign(live.bytes.begin(), live.bytes.end());
    step(modify);
    step_text("deliver next@server:s0");
  };
  // Newest challenge sent to `dest`; error replies in between are skipped.
  auto live_challenge = [&](std::string_view dest) {
    const auto to = *adversary::Endpoint::Parse(dest);
    const auto& h = world.network().history();
    for (auto it = h.rbegin(); it != h.rend(); ++it) {
      if (it->destination.ToString() != to.ToString()) continue;
      auto m = world.Peek(it->id);
      if (const auto* r = std::get_if<messages::ChallengeReply>(&*m)) {
        return r->options.challenge;
      }
      if (const auto* o = std::get_if<messages::TransactionOptions>(&*m)) {
        return o->challenge;
      }
    }
    throw std::logic_error("replay scenario: no live challenge");
  };

  // Second transaction with the same text: B's old assertion, verbatim and
  // against the new first challenge.
  step_text(R"(initiate alice "pay 10 to bob")");
  step_text("deliver next@server:s0");
  step_text("replay " + std::to_string(assertions[0]));
  step_text("deliver next@server:s0");
  retarget(assertions[0], live_challenge("b:alice"));

  // Third transaction runs up to device A; A's old assertion against the
  // new second challenge. Older replies to B are still in flight, so B is
  // handed the newest one.
  step_text(R"(initiate alice "pay 10 to bob")");
  step_text("deliver next@server:s0");
  step_text("deliver last@b:alice");
  step_text("deliver next@server:s0");
  step_text("replay " + std::to_string(assertions[1]));
  step_text("deliver next@server:s0");
  retarget(assertions[1], live_challenge("a:alice"));
  s.bounds.max_steps = std::max(s.bounds.max_steps, s.steps.size());
  return s;
}

std::vector<NamedScenario> BuiltinScenarios() {
  return {
      {"honest", HonestScenario()},
      {"manipulation-nocompare",
       ManipulationScenario(devices::UserMode::kNoCompare)},
      {"manipulation-compare",
       ManipulationScenario(devices::UserMode::kCompare)},
      {"initiation", InitiationScenario()},
      {"dual-compromise", DualCompromiseScenario()},
      {"phishing-relay", PhishingRelayScenario()},
      {"replay", ReplayScenario()},
  };
}

}  // namespace fido2d::harness
