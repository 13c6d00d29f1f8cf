#include "fido2d/lemmas.h"

#include <map>
#include <tuple>

namespace fido2d::harness {
namespace {

using Key = std::tuple<std::string, std::string, std::string>;
using Party = std::pair<std::string, std::string>;

Key KeyOf(const TraceEvent& e) {
  return {e.initiator, e.server, e.transaction};
}

// Index of the first event in `trace` with `label` for `party`, if any.
std::optional<size_t> FirstCompromise(const Trace& trace, EventLabel label,
                                      const Party& party) {
  for (size_t i = 0; i < trace.size(); ++i) {
    const auto& e = trace[i];
    if (e.label == label && e.initiator == party.first &&
        e.server == party.second) {
      return i;
    }
  }
  return std::nullopt;
}

bool Escaped(const Trace& trace, size_t complete_at, bool ordered) {
  const Party party{trace[complete_at].initiator, trace[complete_at].server};
  auto c1 = FirstCompromise(trace, EventLabel::kCompromiseDev1, party);
  auto c2 = FirstCompromise(trace, EventLabel::kCompromiseDev2, party);
  if (!c1 || !c2) return false;
  return !ordered || (*c1 < complete_at && *c2 < complete_at);
}

Verdict Violated(std::string_view lemma, const Trace& trace, size_t at) {
  Verdict v{std::string(lemma), false, Trace{}};
  const TraceEvent& bad = trace[at];
  v.counterexample->push_back(bad);
  for (size_t i = 0; i < trace.size(); ++i) {
    if (i != at && trace[i].initiator == bad.initiator &&
        trace[i].server == bad.server) {
      v.counterexample->push_back(trace[i]);
    }
  }
  return v;
}

}  // namespace

Verdict CheckLemma1(const Trace& trace, LemmaOptions options) {
  std::map<Key, size_t> first_begin;
  for (size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].label == EventLabel::kTransactionBegin) {
      first_begin.emplace(KeyOf(trace[i]), i);
    }
  }
  for (size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].label != EventLabel::kTransactionComplete) continue;
    auto it = first_begin.find(KeyOf(trace[i]));
    const bool begun =
        it != first_begin.end() && (!options.ordered || it->second < i);
    if (!begun && !Escaped(trace, i, options.ordered)) {
      return Violated(kLemma1, trace, i);
    }
  }
  return Verdict{std::string(kLemma1), true, std::nullopt};
}

Verdict CheckLemma2(const Trace& trace, LemmaOptions options) {
  if (options.ordered) {
    // Scanning in order and spending any earlier Begin is optimal: all
    // earlier Begins with the same key are interchangeable.
    std::map<Key, size_t> available;
    for (size_t i = 0; i < trace.size(); ++i) {
      const auto& e = trace[i];
      if (e.label == EventLabel::kTransactionBegin) {
        ++available[KeyOf(e)];
      } else if (e.label == EventLabel::kTransactionComplete &&
                 !Escaped(trace, i, true)) {
        size_t& n = available[KeyOf(e)];
        if (n == 0) return Violated(kLemma2, trace, i);
        --n;
      }
    }
    return Verdict{std::string(kLemma2), true, std::nullopt};
  }
  std::map<Key, size_t> begins;
  for (const auto& e : trace) {
    if (e.label == EventLabel::kTransactionBegin) ++begins[KeyOf(e)];
  }
  std::map<Key, size_t> used;
  for (size_t i = 0; i < trace.size(); ++i) {
    if (trace[i].label != EventLabel::kTransactionComplete ||
        Escaped(trace, i, false)) {
      continue;
    }
    const Key k = KeyOf(trace[i]);
    if (++used[k] > begins[k]) return Violated(kLemma2, trace, i);
  }
  return Verdict{std::string(kLemma2), true, std::nullopt};
}

}  // namespace fido2d::harness
