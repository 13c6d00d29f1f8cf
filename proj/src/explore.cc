#include "fido2d/explore.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <sstream>
#include <thread>

#include "fido2d/adversary.h"

namespace fido2d::harness {
namespace {

using adversary::Endpoint;

constexpr const char* kTexts[] = {"pay 10 to bob", "pay 1000 to mallory",
                                  "close account"};
constexpr const char* kNames[] = {"alice", "bob", "carol"};

bool SplitTokens(std::string_view text, char a, char b,
                 std::vector<std::string>& out) {
  std::string cur;
  for (char c : text) {
    if (c == a || c == b) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return !out.empty();
}

class Generator {
 public:
  Generator(const ThreatConfig& config, const Bounds& bounds, uint64_t seed)
      : config_(config), rng_(crypto::Rng(seed).Fork("schedule")) {
    schedule_.seed = seed;
    schedule_.bounds = bounds;
    const size_t servers = 1 + rng_.Uniform(2);
    for (size_t i = 0; i < servers; ++i) {
      servers_.push_back("s" + std::to_string(i));
    }
    const size_t max_accounts = std::min<size_t>(bounds.max_accounts, 3);
    const size_t accounts = 1 + rng_.Uniform(std::max<size_t>(max_accounts, 1));
    for (size_t i = 0; i < accounts; ++i) {
      schedule_.accounts.push_back(AccountDecl{
          kNames[i], servers_[rng_.Uniform(servers_.size())], config.mode});
    }
    if (config.phishing) {
      for (const auto& s : servers_) {
        schedule_.phishers.push_back(
            PhisherDecl{"p" + s.substr(1), s + "-login", s});
      }
    }
  }

  Generated Run() {
    World world(schedule_);
    world_ = &world;
    const size_t max_steps = schedule_.bounds.max_steps;
    std::vector<Action> prefix;
    for (const auto& s : servers_) {
      prefix.push_back(Make(ActionKind::kNewServer, s));
    }
    for (const auto& a : schedule_.accounts) {
      prefix.push_back(Make(ActionKind::kRegister, a.name));
    }
    const size_t low = std::min(prefix.size() + 10, max_steps);
    const size_t high = std::min<size_t>(max_steps, prefix.size() + 90);
    const size_t length = low + rng_.Uniform(high - low + 1);

    std::optional<std::string> internal;
    try {
      for (auto& a : prefix) {
        if (schedule_.steps.size() >= length) break;
        Step(std::move(a));
      }
      while (schedule_.steps.size() < length) {
        Step(Pick());
      }
    } catch (const crypto::InternalError& e) {
      internal = e.what();
    }
    world_ = nullptr;
    Generated out{schedule_, world.Finish()};
    out.result.internal_error = internal;
    return out;
  }

 private:
  static Action Make(ActionKind kind, std::string target = {}) {
    Action a;
    a.kind = kind;
    a.target = std::move(target);
    return a;
  }

  void Step(Action a) {
    if (a.kind == ActionKind::kInitiate || a.kind == ActionKind::kPhish) {
      ++transactions_;
    }
    schedule_.steps.push_back(a);
    world_->Apply(a);
    Index();
  }

  // Sorts new history entries into what the attacker can build from.
  void Index() {
    const auto& history = world_->network().history();
    for (; indexed_ < history.size(); ++indexed_) {
      auto m = world_->Peek(indexed_);
      if (!m) continue;
      if (const auto* r = std::get_if<messages::ChallengeReply>(&*m)) {
        requests_.push_back({indexed_, r->request.username});
        challenges_.push_back({indexed_, r->request.username});
      } else if (const auto* q = std::get_if<messages::TransactionRequest>(&*m)) {
        requests_.push_back({indexed_, q->username});
      } else if (const auto* o = std::get_if<messages::TransactionOptions>(&*m)) {
        const auto& dest = history[indexed_].destination;
        challenges_.push_back({indexed_, dest.name});
        if (o->transaction_data) second_.push_back({indexed_, dest.name});
      }
    }
  }

  template <typename T>
  const T& Choose(const std::vector<T>& v) {
    return v[rng_.Uniform(v.size())];
  }
  std::string Text() { return kTexts[rng_.Uniform(std::size(kTexts))]; }
  std::string AnyAccount() { return Choose(schedule_.accounts).name; }
  const PhisherDecl& AnyPhisher() { return Choose(schedule_.phishers); }
  std::string AnyEndpoint() {
    switch (rng_.Uniform(3)) {
      case 0:
        return "server:" + Choose(servers_);
      case 1:
        return "b:" + AnyAccount();
      default:
        return "a:" + AnyAccount();
    }
  }
  // The account a message concerns, most of the time; otherwise any.
  std::string Victim(const std::string& hint) {
    if (!hint.empty() && schedule_.FindAccount(hint) && rng_.Chance(4, 5)) {
      return hint;
    }
    return AnyAccount();
  }

  Action Pick() {
    struct Option {
      uint32_t weight;
      std::function<Action()> make;
    };
    std::vector<Option> menu;
    const auto& net = world_->network();
    const auto in_flight = net.InFlight();
    const size_t history = net.history().size();
    const bool tx_left = transactions_ < schedule_.bounds.max_transactions;

    if (!in_flight.empty()) {
      menu.push_back({14, [&] {
                        Action a = Make(ActionKind::kDeliver);
                        a.sel = Selector::Index(Choose(in_flight));
                        return a;
                      }});
      menu.push_back({1, [&] {
                        Action a = Make(ActionKind::kDrop);
                        a.sel = Selector::Index(Choose(in_flight));
                        return a;
                      }});
      std::vector<uint64_t> open;
      for (uint64_t id : in_flight) {
        if (!net.Find(id)->authentic) open.push_back(id);
      }
      if (!open.empty()) {
        menu.push_back({1, [&, open] {
                          Action a = Make(ActionKind::kModify);
                          const uint64_t id = Choose(open);
                          a.sel = Selector::Index(id);
                          const size_t size = net.Find(id)->bytes.size();
                          a.offset = rng_.Uniform(std::max<size_t>(size, 1));
                          a.patch = {static_cast<uint8_t>(rng_.Uniform(256))};
                          return a;
                        }});
      }
    }
    if (history > 0) {
      menu.push_back({2, [&] {
                        Action a = Make(ActionKind::kReplay);
                        a.sel = Selector::Index(rng_.Uniform(history));
                        return a;
                      }});
      menu.push_back({1, [&] {
                        Action a = Make(ActionKind::kForward);
                        a.sel = Selector::Index(rng_.Uniform(history));
                        a.endpoint = AnyEndpoint();
                        return a;
                      }});
    }
    if (tx_left) {
      menu.push_back({4, [&] {
                        Action a = Make(ActionKind::kInitiate, AnyAccount());
                        a.data = Text();
                        return a;
                      }});
      if (config_.phishing) {
        menu.push_back({3, [&] {
                          Action a = Make(ActionKind::kPhish, AnyAccount());
                          a.phisher = AnyPhisher().id;
                          a.data = Text();
                          return a;
                        }});
      }
    }
    menu.push_back({2, [&] {
                      Action a = Make(ActionKind::kInjectRequest, AnyAccount());
                      a.data = Text();
                      if (rng_.Chance(1, 2)) a.as = "b:" + AnyAccount();
                      return a;
                    }});
    if (!challenges_.empty()) {
      menu.push_back({3, [&] {
                        const auto& [id, hint] = Choose(challenges_);
                        Action a = Make(ActionKind::kForgeB, Victim(hint));
                        a.sel = Selector::Index(id);
                        return a;
                      }});
      menu.push_back({3, [&] {
                        const auto& pool = second_.empty() ? challenges_ : second_;
                        const auto& [id, hint] = Choose(pool);
                        Action a = Make(ActionKind::kForgeA, Victim(hint));
                        a.sel = Selector::Index(id);
                        if (rng_.Chance(1, 2)) a.data = Text();
                        return a;
                      }});
    }
    if (config_.phishing && !requests_.empty()) {
      menu.push_back({3, [&] {
                        Action a = Make(ActionKind::kPhishRelay);
                        a.phisher = AnyPhisher().id;
                        a.sel = Selector::Index(Choose(requests_).first);
                        if (rng_.Chance(1, 2)) a.data = Text();
                        return a;
                      }});
      if (!challenges_.empty()) {
        menu.push_back({3, [&] {
                          Action a = Make(ActionKind::kPhishAnswer);
                          a.phisher = AnyPhisher().id;
                          a.sel = Selector::Index(Choose(requests_).first);
                          a.sel2 = Selector::Index(Choose(challenges_).first);
                          a.rebind = rng_.Chance(1, 2);
                          return a;
                        }});
      }
    }
    for (const auto& acc : schedule_.accounts) {
      if (!world_->registered(acc.name)) continue;
      if (config_.compromise_b &&
          !world_->compromised(acc.name, devices::Role::kB)) {
        menu.push_back({1, [&, name = acc.name] {
                          Action a = Make(ActionKind::kCompromise, name);
                          a.role = devices::Role::kB;
                          return a;
                        }});
      }
      if (config_.compromise_a &&
          !world_->compromised(acc.name, devices::Role::kA)) {
        menu.push_back({1, [&, name = acc.name] {
                          Action a = Make(ActionKind::kCompromise, name);
                          a.role = devices::Role::kA;
                          return a;
                        }});
      }
    }

    uint64_t total = 0;
    for (const auto& o : menu) total += o.weight;
    uint64_t r = rng_.Uniform(total);
    for (const auto& o : menu) {
      if (r < o.weight) return o.make();
      r -= o.weight;
    }
    return menu.back().make();
  }

  ThreatConfig config_;
  crypto::Rng rng_;
  Schedule schedule_;
  std::vector<std::string> servers_;
  World* world_ = nullptr;
  size_t transactions_ = 0;
  size_t indexed_ = 0;
  std::vector<std::pair<uint64_t, std::string>> requests_;
  std::vector<std::pair<uint64_t, std::string>> challenges_;
  std::vector<std::pair<uint64_t, std::string>> second_;
};

struct RunSummary {
  size_t steps = 0;
  size_t begins = 0;
  size_t completes = 0;
  size_t aborts = 0;
  bool lemma1 = true;
  bool lemma2 = true;
  std::vector<std::string> audit_failures;
  bool internal_error = false;
  std::string digest;
};

bool Fails(const RunResult& r, std::string_view lemma, LemmaOptions options) {
  if (lemma == kLemma1) return !CheckLemma1(r.trace, options).holds;
  if (lemma == kLemma2) return !CheckLemma2(r.trace, options).holds;
  return !r.audit_failures.empty() || r.internal_error.has_value();
}

}  // namespace

Result<ThreatConfig> ThreatConfig::Parse(std::string_view text) {
  ThreatConfig c;
  std::vector<std::string> tokens;
  SplitTokens(text, '+', ',', tokens);
  for (const auto& t : tokens) {
    if (t == "compromise-b") {
      c.compromise_b = true;
    } else if (t == "compromise-a") {
      c.compromise_a = true;
    } else if (t == "phishing") {
      c.phishing = true;
    } else if (auto mode = devices::ParseUserMode(t)) {
      c.mode = *mode;
    } else {
      return MakeError(ErrorCode::kInvalidInput,
                       "unknown threat token '" + t + "'");
    }
  }
  return c;
}

std::string ThreatConfig::Name() const {
  std::string out(devices::UserModeName(mode));
  if (phishing) out += "+phishing";
  if (compromise_a) out += "+compromise-a";
  if (compromise_b) out += "+compromise-b";
  return out;
}

Result<std::vector<ThreatConfig>> ParseThreats(std::string_view text) {
  if (text == "table") {
    std::vector<ThreatConfig> out;
    for (auto mode : {devices::UserMode::kCompare,
                      devices::UserMode::kNoCompare}) {
      out.push_back({true, false, false, mode});
      out.push_back({false, true, false, mode});
      out.push_back({false, false, true, mode});
      out.push_back({false, true, true, mode});
      out.push_back({true, false, true, mode});
    }
    return out;
  }
  std::vector<std::string> parts;
  if (!SplitTokens(text, ';', ';', parts)) {
    return MakeError(ErrorCode::kInvalidInput, "no threat configuration");
  }
  std::vector<ThreatConfig> out;
  for (const auto& p : parts) {
    auto c = ThreatConfig::Parse(p);
    if (!c) return c.error();
    out.push_back(*c);
  }
  return out;
}

Generated Generate(const ThreatConfig& config, const Bounds& bounds,
                   uint64_t seed) {
  return Generator(config, bounds, seed).Run();
}

uint64_t RunSeed(uint64_t master, size_t index) {
  crypto::Rng rng =
      crypto::Rng(master).Fork("run:" + std::to_string(index));
  return rng.NextU64();
}

namespace {

bool UsesSel(ActionKind k) {
  switch (k) {
    case ActionKind::kDeliver:
    case ActionKind::kDrop:
    case ActionKind::kReplay:
    case ActionKind::kForward:
    case ActionKind::kModify:
    case ActionKind::kForgeB:
    case ActionKind::kForgeA:
    case ActionKind::kPhishRelay:
    case ActionKind::kPhishAnswer:
      return true;
    default:
      return false;
  }
}

// History ids appended by each step: [first, second).
std::vector<std::pair<uint64_t, uint64_t>> HistoryRanges(const Schedule& s) {
  std::vector<std::pair<uint64_t, uint64_t>> ranges;
  World world(s);
  try {
    for (const auto& a : s.steps) {
      const uint64_t before = world.network().history().size();
      world.Apply(a);
      ranges.emplace_back(before, world.network().history().size());
    }
  } catch (const crypto::InternalError&) {
  }
  while (ranges.size() < s.steps.size()) {
    const uint64_t end = ranges.empty() ? 0 : ranges.back().second;
    ranges.emplace_back(end, end);
  }
  return ranges;
}

// Removes step `victim` and every later step whose index selector points at
// a message a removed step created; renumbers the index selectors of the
// rest as if the removed messages had never existed.
Schedule WithoutStep(const Schedule& s,
                     const std::vector<std::pair<uint64_t, uint64_t>>& ranges,
                     size_t victim) {
  std::vector<bool> removed(s.steps.size(), false);
  removed[victim] = true;
  auto owner_removed = [&](uint64_t id) {
    for (size_t k = 0; k < s.steps.size(); ++k) {
      if (removed[k] && id >= ranges[k].first && id < ranges[k].second) {
        return true;
      }
    }
    return false;
  };
  auto depends = [&](const Selector& sel) {
    return sel.kind == Selector::Kind::kIndex && owner_removed(sel.index);
  };
  for (size_t j = victim + 1; j < s.steps.size(); ++j) {
    const Action& a = s.steps[j];
    if (!UsesSel(a.kind)) continue;
    if (depends(a.sel) ||
        (a.kind == ActionKind::kPhishAnswer && depends(a.sel2))) {
      removed[j] = true;
    }
  }
  auto remap = [&](Selector& sel) {
    if (sel.kind != Selector::Kind::kIndex) return;
    uint64_t gone = 0;
    for (size_t k = 0; k < s.steps.size(); ++k) {
      if (!removed[k]) continue;
      const auto [lo, hi] = ranges[k];
      if (hi <= sel.index) gone += hi - lo;
    }
    sel.index -= gone;
  };
  Schedule out = s;
  out.steps.clear();
  for (size_t j = 0; j < s.steps.size(); ++j) {
    if (removed[j]) continue;
    Action a = s.steps[j];
    if (UsesSel(a.kind)) {
      remap(a.sel);
      if (a.kind == ActionKind::kPhishAnswer) remap(a.sel2);
    }
    out.steps.push_back(std::move(a));
  }
  return out;
}

}  // namespace

Schedule Shrink(const Schedule& schedule, std::string_view lemma,
                LemmaOptions options) {
  Schedule best = schedule;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = best.steps.size(); i-- > 0;) {
      if (i >= best.steps.size()) continue;
      // Plain deletion first; when it breaks the run, the renumbered
      // variant with dependent steps dropped too.
      Schedule plain = best;
      plain.steps.erase(plain.steps.begin() + static_cast<std::ptrdiff_t>(i));
      auto r = Run(plain);
      if (r && Fails(*r, lemma, options)) {
        best = std::move(plain);
        changed = true;
        continue;
      }
      Schedule renumbered = WithoutStep(best, HistoryRanges(best), i);
      r = Run(renumbered);
      if (r && Fails(*r, lemma, options)) {
        best = std::move(renumbered);
        changed = true;
      }
    }
  }
  return best;
}

ExploreReport Explore(const ThreatConfig& config,
                      const ExploreOptions& options) {
  std::vector<RunSummary> runs(options.runs);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < options.runs; i = next++) {
      Generated g = Generate(config, options.bounds, RunSeed(options.seed, i));
      RunSummary& s = runs[i];
      s.steps = g.schedule.steps.size();
      for (const auto& e : g.result.trace) {
        s.begins += e.label == EventLabel::kTransactionBegin;
        s.completes += e.label == EventLabel::kTransactionComplete;
      }
      s.aborts = g.result.aborts;
      s.lemma1 = CheckLemma1(g.result.trace, options.lemmas).holds;
      s.lemma2 = CheckLemma2(g.result.trace, options.lemmas).holds;
      s.audit_failures = g.result.audit_failures;
      s.internal_error = g.result.internal_error.has_value();
      if (s.internal_error) {
        s.audit_failures.push_back("internal error: " +
                                   *g.result.internal_error);
      }
      s.digest = g.result.log_digest;
    }
  };
  unsigned threads = options.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(
      std::min<size_t>(threads, std::max<size_t>(options.runs, 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExploreReport report;
  report.config = config;
  report.runs = options.runs;
  std::string digests;
  std::optional<size_t> first;
  for (size_t i = 0; i < runs.size(); ++i) {
    const RunSummary& s = runs[i];
    report.steps += s.steps;
    report.begins += s.begins;
    report.completes += s.completes;
    report.aborts += s.aborts;
    digests += s.digest;
    bool bad = !s.lemma1 || !s.lemma2;
    report.lemma1_violations += !s.lemma1;
    report.lemma2_violations += !s.lemma2;
    if (!s.audit_failures.empty()) {
      bad = true;
      report.audit_failures += !s.internal_error;
      report.internal_errors += s.internal_error;
      if (report.first_audit_failures.empty()) {
        report.first_audit_failures = s.audit_failures;
      }
    }
    if (bad && !first) first = i;
  }
  report.digest = crypto::DigestHex(ToBytes(digests));

  if (first) {
    const size_t i = *first;
    Generated g =
        Generate(config, options.bounds, RunSeed(options.seed, i));
    Counterexample ce;
    ce.run_index = i;
    std::string lemma = !runs[i].lemma1   ? std::string(kLemma1)
                        : !runs[i].lemma2 ? std::string(kLemma2)
                                          : std::string("audit");
    ce.schedule = options.shrink ? Shrink(g.schedule, lemma, options.lemmas)
                                 : g.schedule;
    auto r = Run(ce.schedule);
    if (r) {
      ce.trace = r->trace;
      ce.verdict = lemma == kLemma2 ? CheckLemma2(r->trace, options.lemmas)
                                    : CheckLemma1(r->trace, options.lemmas);
      if (lemma == "audit") {
        ce.verdict = Verdict{"audit", false, r->trace};
      }
    }
    report.counterexample = std::move(ce);
  }
  return report;
}

std::string FormatTable(const std::vector<ExploreReport>& reports) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-38s %7s %8s %9s %8s %6s %6s %6s  %-8s %s\n",
                "threats", "runs", "begins", "completes", "aborts", "L1",
                "L2", "audit", "claimed", "result");
  os << line;
  for (const auto& r : reports) {
    const char* result = !r.violated() ? "secure"
                         : r.ok()      ? "attack found (expected)"
                                       : "VIOLATION";
    std::snprintf(line, sizeof line,
                  "%-38s %7zu %8zu %9zu %8zu %6zu %6zu %6zu  %-8s %s\n",
                  r.config.Name().c_str(), r.runs, r.begins, r.completes,
                  r.aborts, r.lemma1_violations, r.lemma2_violations,
                  r.audit_failures + r.internal_errors,
                  r.config.SecurityClaimed() ? "yes" : "no", result);
    os << line;
  }

  // The comparison-table view: one mark per (user mode, threat).
  auto mark = [&](devices::UserMode mode, bool b, bool a, bool phish) {
    for (const auto& r : reports) {
      if (r.config.mode == mode && r.config.compromise_b == b &&
          r.config.compromise_a == a && r.config.phishing == phish) {
        return std::string(r.violated() ? "x" : "ok");
      }
    }
    return std::string("-");
  };
  os << "\n2DA      | B compromised | A compromised | phishing\n";
  for (auto mode : {devices::UserMode::kCompare,
                    devices::UserMode::kNoCompare}) {
    std::snprintf(line, sizeof line, "%-9s| %-13s | %-13s | %s\n",
                  std::string(devices::UserModeName(mode)).c_str(),
                  mark(mode, true, false, false).c_str(),
                  mark(mode, false, true, false).c_str(),
                  mark(mode, false, false, true).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace fido2d::harness
