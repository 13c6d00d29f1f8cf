#ifndef FIDO2D_LEMMAS_H_
#define FIDO2D_LEMMAS_H_

#include <optional>
#include <string>

#include "fido2d/trace.h"

namespace fido2d::harness {

inline constexpr std::string_view kLemma1 =
    "only_user_initiated_transactions_accepted";
inline constexpr std::string_view kLemma2 = "replay_attacks_impossible";

struct Verdict {
  std::string lemma;
  bool holds = true;
  // The violating TransactionComplete followed by every event sharing its
  // (initiator, server). Present iff holds is false.
  std::optional<Trace> counterexample;
};

struct LemmaOptions {
  // Ordered variant: the matching Begin and both escape compromises must
  // precede the Complete in the trace. Off by default; the unordered form
  // is the property proven for the protocol.
  bool ordered = false;
};

// Every TransactionComplete(u, s, d) has a TransactionBegin(u, s, d), unless
// both CompromiseDev1(u, s) and CompromiseDev2(u, s) occur.
Verdict CheckLemma1(const Trace& trace, LemmaOptions options = {});

// Completes not covered by the escape clause map injectively onto Begins
// with the same (u, s, d).
Verdict CheckLemma2(const Trace& trace, LemmaOptions options = {});

}  // namespace fido2d::harness

#endif  // FIDO2D_LEMMAS_H_
