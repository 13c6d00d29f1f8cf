#ifndef FIDO2D_EXPLORE_H_
#define FIDO2D_EXPLORE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fido2d/devices.h"
#include "fido2d/lemmas.h"
#include "fido2d/result.h"
#include "fido2d/schedule.h"
#include "fido2d/world.h"

namespace fido2d::harness {

// Which attacker rules are enabled, and how the users behave.
struct ThreatConfig {
  bool compromise_b = false;
  bool compromise_a = false;
  bool phishing = false;
  devices::UserMode mode = devices::UserMode::kCompare;

  // Tokens joined by '+' or ',': compromise-b, compromise-a, phishing,
  // compare, nocompare. Example: "phishing+compromise-a+compare".
  static Result<ThreatConfig> Parse(std::string_view text);
  std::string Name() const;
  // The protocol claims one-out-of-two security for Compare users, and for
  // NoCompare users as long as device B stays clean.
  bool SecurityClaimed() const {
    return mode == devices::UserMode::kCompare || !compromise_b;
  }
};

// ';'-separated configs, or "table" for the full set the summary table
// reports.
Result<std::vector<ThreatConfig>> ParseThreats(std::string_view text);

struct ExploreOptions {
  uint64_t seed = 0;
  size_t runs = 10000;
  Bounds bounds;
  unsigned threads = 0;  // 0: one per hardware thread
  LemmaOptions lemmas;
  bool shrink = true;
};

struct Counterexample {
  size_t run_index = 0;
  Verdict verdict;
  // Shrunk schedule that still violates the lemma, and its trace.
  Schedule schedule;
  Trace trace;
};

struct ExploreReport {
  ThreatConfig config;
  size_t runs = 0;
  size_t steps = 0;
  size_t begins = 0;
  size_t completes = 0;
  size_t aborts = 0;
  size_t lemma1_violations = 0;
  size_t lemma2_violations = 0;
  size_t audit_failures = 0;
  size_t internal_errors = 0;
  // Lowest run index with a lemma violation, audit failure or internal
  // error.
  std::optional<Counterexample> counterexample;
  std::vector<std::string> first_audit_failures;
  // BLAKE2b over the per-run log digests in run order.
  std::string digest;

  bool violated() const {
    return lemma1_violations + lemma2_violations + audit_failures +
               internal_errors !=
           0;
  }
  // False only for a violation where security is claimed.
  bool ok() const { return !config.SecurityClaimed() || !violated(); }
};

struct Generated {
  Schedule schedule;
  RunResult result;
};

// Builds one random schedule by stepping a World and choosing each action
// from what the current state offers. Replaying `schedule` through Run()
// reproduces `result` exactly.
Generated Generate(const ThreatConfig& config, const Bounds& bounds,
                   uint64_t seed);

// Per-run seed: independent of thread count and run order.
uint64_t RunSeed(uint64_t master, size_t index);

ExploreReport Explore(const ThreatConfig& config,
                      const ExploreOptions& options);

// Greedy step deletion: drops any step whose removal keeps `lemma`
// violated, until no single removal does.
Schedule Shrink(const Schedule& schedule, std::string_view lemma,
                LemmaOptions options = {});

// Summary table, one row per report, laid out like the 2DA row of the
// comparison table: one column per threat, per user mode.
std::string FormatTable(const std::vector<ExploreReport>& reports);

}  // namespace fido2d::harness

#endif  // FIDO2D_EXPLORE_H_
