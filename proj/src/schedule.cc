#include "fido2d/schedule.h"

#include <array>
#include <charconv>
#include <iomanip>
#include <set>
#include <sstream>
#include <utility>

#include "fido2d/adversary.h"

namespace fido2d::harness {
namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 17> kKinds{{
    {ActionKind::kNewServer, "new_server"},
    {ActionKind::kRegister, "register"},
    {ActionKind::kInitiate, "initiate"},
    {ActionKind::kPhish, "phish"},
    {ActionKind::kDeliver, "deliver"},
    {ActionKind::kDrop, "drop"},
    {ActionKind::kReplay, "replay"},
    {ActionKind::kForward, "forward"},
    {ActionKind::kModify, "modify"},
    {ActionKind::kInject, "inject"},
    {ActionKind::kInjectRequest, "inject_request"},
    {ActionKind::kForgeB, "forge_b"},
    {ActionKind::kForgeA, "forge_a"},
    {ActionKind::kPhishRelay, "phish_relay"},
    {ActionKind::kPhishAnswer, "phish_answer"},
    {ActionKind::kCompromise, "compromise"},
    {ActionKind::kObserve, "observe"},
}};

std::optional<ActionKind> ParseKind(std::string_view name) {
  for (const auto& [k, n] : kKinds) {
    if (n == name) return k;
  }
  return std::nullopt;
}

template <typename T>
bool ParseNumber(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && !text.empty();
}

std::string Quote(const std::string& s) {
  std::ostringstream os;
  os << std::quoted(s);
  return os.str();
}

Error ScheduleError(std::string detail) {
  return MakeError(ErrorCode::kScheduleError, std::move(detail));
}

// Whitespace tokenizer that honours "quoted strings".
class Tokens {
 public:
  explicit Tokens(std::string_view line) : in_(std::string(line)) {}

  bool Next(std::string& out) {
    in_ >> std::ws;
    if (in_.eof()) return false;
    if (in_.peek() == '"') {
      quoted_ = true;
      return static_cast<bool>(in_ >> std::quoted(out));
    }
    quoted_ = false;
    return static_cast<bool>(in_ >> out);
  }
  bool last_quoted() const { return quoted_; }
  bool AtEnd() {
    in_ >> std::ws;
    return in_.eof();
  }

 private:
  std::istringstream in_;
  bool quoted_ = false;
};

// A '#' inside a quoted transaction text is data, not a comment.
void StripComment(std::string& line) {
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (quoted && line[i] == '\\') {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      line.resize(i);
      return;
    }
  }
}

}  // namespace

std::string_view ActionKindName(ActionKind kind) {
  for (const auto& [k, n] : kKinds) {
    if (k == kind) return n;
  }
  return "unknown";
}

std::optional<Selector> Selector::Parse(std::string_view text) {
  Selector s;
  for (auto [prefix, kind] : {std::pair{std::string_view("next@"), Kind::kNext},
                              std::pair{std::string_view("last@"), Kind::kLast}}) {
    if (text.substr(0, prefix.size()) == prefix) {
      s.kind = kind;
      s.endpoint = std::string(text.substr(prefix.size()));
      if (!adversary::Endpoint::Parse(s.endpoint)) return std::nullopt;
      return s;
    }
  }
  if (!ParseNumber(text, s.index)) return std::nullopt;
  return s;
}

std::string Selector::ToString() const {
  switch (kind) {
    case Kind::kIndex:
      return std::to_string(index);
    case Kind::kNext:
      return "next@" + endpoint;
    case Kind::kLast:
      return "last@" + endpoint;
  }
  return "";
}

std::string Action::ToString() const {
  std::string out(ActionKindName(kind));
  auto add = [&](const std::string& s) {
    out += ' ';
    out += s;
  };
  switch (kind) {
    case ActionKind::kNewServer:
    case ActionKind::kRegister:
      add(target);
      break;
    case ActionKind::kInitiate:
      add(target);
      add(Quote(data.value_or("")));
      break;
    case ActionKind::kPhish:
      add(target);
      add(phisher);
      add(Quote(data.value_or("")));
      break;
    case ActionKind::kDeliver:
    case ActionKind::kDrop:
    case ActionKind::kReplay:
      add(sel.ToString());
      break;
    case ActionKind::kForward:
      add(sel.ToString());
      add(endpoint);
      break;
    case ActionKind::kModify:
      add(sel.ToString());
      add(std::to_string(offset));
      add(ToHex(patch));
      break;
    case ActionKind::kInject:
      add(endpoint);
      add(ToHex(patch));
      if (as) add("as " + *as);
      break;
    case ActionKind::kInjectRequest:
      add(target);
      add(Quote(data.value_or("")));
      if (as) add("as " + *as);
      break;
    case ActionKind::kForgeB:
      add(target);
      add(sel.ToString());
      break;
    case ActionKind::kForgeA:
      add(target);
      add(sel.ToString());
      if (data) add(Quote(*data));
      break;
    case ActionKind::kPhishRelay:
      add(phisher);
      add(sel.ToString());
      if (data) add(Quote(*data));
      break;
    case ActionKind::kPhishAnswer:
      add(phisher);
      add(sel.ToString());
      add(sel2.ToString());
      if (rebind) add("rebind");
      break;
    case ActionKind::kCompromise:
      add(target);
      add(role == devices::Role::kB ? "b" : "a");
      break;
    case ActionKind::kObserve:
      break;
  }
  return out;
}

Result<Action> Action::Parse(std::string_view line) {
  Tokens tok(line);
  std::string word;
  if (!tok.Next(word)) return ScheduleError("empty step");
  auto kind = ParseKind(word);
  if (!kind) return ScheduleError("unknown action '" + word + "'");
  Action a;
  a.kind = *kind;

  auto need = [&](std::string& out, const char* what) -> std::optional<Error> {
    if (!tok.Next(out)) {
      return ScheduleError(word + ": missing " + what);
    }
    return std::nullopt;
  };
  auto need_quoted = [&](std::optional<std::string>& out,
                         const char* what) -> std::optional<Error> {
    std::string s;
    if (!tok.Next(s) || !tok.last_quoted()) {
      return ScheduleError(word + ": missing quoted " + std::string(what));
    }
    out = std::move(s);
    return std::nullopt;
  };
  auto need_sel = [&](Selector& out) -> std::optional<Error> {
    std::string s;
    if (!tok.Next(s)) return ScheduleError(word + ": missing selector");
    auto sel = Selector::Parse(s);
    if (!sel) return ScheduleError(word + ": bad selector '" + s + "'");
    out = *sel;
    return std::nullopt;
  };
  auto need_hex = [&](Bytes& out) -> std::optional<Error> {
    std::string s;
    if (!tok.Next(s)) return ScheduleError(word + ": missing hex bytes");
    auto bytes = FromHex(s);
    if (!bytes) return ScheduleError(word + ": bad hex '" + s + "'");
    out = std::move(*bytes);
    return std::nullopt;
  };
  // Trailing optional words: "as <endpoint>", a quoted text, or "rebind".
  auto tail = [&](bool allow_as, bool allow_data,
                  bool allow_rebind) -> std::optional<Error> {
    std::string s;
    while (tok.Next(s)) {
      if (tok.last_quoted() && allow_data && !a.data) {
        a.data = s;
      } else if (s == "as" && allow_as && !a.as) {
        std::string ep;
        if (!tok.Next(ep)) return ScheduleError(word + ": 'as' needs an endpoint");
        a.as = ep;
      } else if (s == "rebind" && allow_rebind) {
        a.rebind = true;
      } else {
        return ScheduleError(word + ": unexpected '" + s + "'");
      }
    }
    return std::nullopt;
  };

  std::optional<Error> err;
  switch (a.kind) {
    case ActionKind::kNewServer:
      err = need(a.target, "server id");
      break;
    case ActionKind::kRegister:
      err = need(a.target, "account");
      break;
    case ActionKind::kInitiate:
      if (!(err = need(a.target, "account"))) {
        err = need_quoted(a.data, "transaction text");
      }
      break;
    case ActionKind::kPhish:
      if (!(err = need(a.target, "account")) &&
          !(err = need(a.phisher, "phisher"))) {
        err = need_quoted(a.data, "transaction text");
      }
      break;
    case ActionKind::kDeliver:
    case ActionKind::kDrop:
    case ActionKind::kReplay:
      err = need_sel(a.sel);
      break;
    case ActionKind::kForward:
      if (!(err = need_sel(a.sel))) err = need(a.endpoint, "destination");
      break;
    case ActionKind::kModify: {
      std::string off;
      if (!(err = need_sel(a.sel)) && !(err = need(off, "offset"))) {
        if (!ParseNumber(off, a.offset)) {
          err = ScheduleError("modify: bad offset '" + off + "'");
        } else {
          err = need_hex(a.patch);
        }
      }
      break;
    }
    case ActionKind::kInject:
      if (!(err = need(a.endpoint, "destination")) &&
          !(err = need_hex(a.patch))) {
        err = tail(true, false, false);
      }
      break;
    case ActionKind::kInjectRequest:
      if (!(err = need(a.target, "account")) &&
          !(err = need_quoted(a.data, "transaction text"))) {
        err = tail(true, false, false);
      }
      break;
    case ActionKind::kForgeB:
      if (!(err = need(a.target, "account"))) err = need_sel(a.sel);
      break;
    case ActionKind::kForgeA:
      if (!(err = need(a.target, "account")) && !(err = need_sel(a.sel))) {
        err = tail(false, true, false);
      }
      break;
    case ActionKind::kPhishRelay:
      if (!(err = need(a.phisher, "phisher")) && !(err = need_sel(a.sel))) {
        err = tail(false, true, false);
      }
      break;
    case ActionKind::kPhishAnswer:
      if (!(err = need(a.phisher, "phisher")) && !(err = need_sel(a.sel)) &&
          !(err = need_sel(a.sel2))) {
        err = tail(false, false, true);
      }
      break;
    case ActionKind::kCompromise: {
      std::string role;
      if (!(err = need(a.target, "account")) && !(err = need(role, "device"))) {
        if (role == "b") {
          a.role = devices::Role::kB;
        } else if (role == "a") {
          a.role = devices::Role::kA;
        } else {
          err = ScheduleError("compromise: device must be 'b' or 'a'");
        }
      }
      break;
    }
    case ActionKind::kObserve:
      break;
  }
  if (err) return *err;
  if (!tok.AtEnd()) return ScheduleError(word + ": trailing input");
  return a;
}

const AccountDecl* Schedule::FindAccount(std::string_view name) const {
  for (const auto& a : accounts) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

const PhisherDecl* Schedule::FindPhisher(std::string_view id) const {
  for (const auto& p : phishers) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::string Schedule::ToString() const {
  std::ostringstream os;
  os << "seed " << seed << "\n";
  os << "bounds steps=" << bounds.max_steps
     << " accounts=" << bounds.max_accounts
     << " transactions=" << bounds.max_transactions << "\n";
  for (const auto& p : phishers) {
    os << "phisher " << p.id << " " << p.fake_server_id << " "
       << p.target_server << "\n";
  }
  for (const auto& a : accounts) {
    os << "account " << a.name << " " << a.server << " "
       << devices::UserModeName(a.mode) << "\n";
  }
  for (const auto& s : steps) {
    os << s.ToString() << "\n";
  }
  return os.str();
}

Result<Schedule> ParseSchedule(std::string_view text) {
  Schedule schedule;
  size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    StripComment(line);
    Tokens tok(line);
    std::string head;
    if (!tok.Next(head)) continue;
    auto fail = [&](const std::string& what) {
      return ScheduleError("line " + std::to_string(line_no) + ": " + what);
    };
    if (head == "seed") {
      std::string v;
      if (!tok.Next(v) || !ParseNumber(v, schedule.seed) || !tok.AtEnd()) {
        return fail("seed needs one unsigned integer");
      }
    } else if (head == "bounds") {
      std::string kv;
      while (tok.Next(kv)) {
        const auto eq = kv.find('=');
        size_t value = 0;
        if (eq == std::string::npos ||
            !ParseNumber(std::string_view(kv).substr(eq + 1), value)) {
          return fail("bad bound '" + kv + "'");
        }
        const std::string key = kv.substr(0, eq);
        if (key == "steps") {
          schedule.bounds.max_steps = value;
        } else if (key == "accounts") {
          schedule.bounds.max_accounts = value;
        } else if (key == "transactions") {
          schedule.bounds.max_transactions = value;
        } else {
          return fail("unknown bound '" + key + "'");
        }
      }
    } else if (head == "account") {
      AccountDecl a;
      std::string mode;
      if (!tok.Next(a.name) || !tok.Next(a.server) || !tok.Next(mode) ||
          !tok.AtEnd()) {
        return fail("account <name> <server> compare|nocompare");
      }
      auto m = devices::ParseUserMode(mode);
      if (!m) return fail("unknown user mode '" + mode + "'");
      a.mode = *m;
      schedule.accounts.push_back(std::move(a));
    } else if (head == "phisher") {
      PhisherDecl p;
      if (!tok.Next(p.id) || !tok.Next(p.fake_server_id) ||
          !tok.Next(p.target_server) || !tok.AtEnd()) {
        return fail("phisher <id> <fake server id> <target server>");
      }
      schedule.phishers.push_back(std::move(p));
    } else {
      auto action = Action::Parse(line);
      if (!action) return fail(action.error().detail);
      schedule.steps.push_back(std::move(action).value());
    }
  }
  return schedule;
}

Result<Ok> ValidateSchedule(const Schedule& schedule) {
  std::set<std::string, std::less<>> servers;
  for (size_t i = 0; i < schedule.steps.size(); ++i) {
    const Action& a = schedule.steps[i];
    if (a.kind == ActionKind::kNewServer &&
        !servers.insert(a.target).second) {
      return ScheduleError("step " + std::to_string(i + 1) + ": server '" +
                           a.target + "' created twice");
    }
  }
  if (schedule.accounts.size() > schedule.bounds.max_accounts) {
    return ScheduleError("more than " +
                         std::to_string(schedule.bounds.max_accounts) +
                         " accounts");
  }
  if (schedule.steps.size() > schedule.bounds.max_steps) {
    return ScheduleError("more than " +
                         std::to_string(schedule.bounds.max_steps) + " steps");
  }
  std::set<std::string, std::less<>> names;
  for (const auto& acc : schedule.accounts) {
    if (!names.insert(acc.name).second) {
      return ScheduleError("account '" + acc.name + "' declared twice");
    }
    if (!servers.count(acc.server)) {
      return ScheduleError("account '" + acc.name + "' names unknown server '" +
                           acc.server + "'");
    }
  }
  std::set<std::string, std::less<>> phishers;
  for (const auto& p : schedule.phishers) {
    if (!phishers.insert(p.id).second) {
      return ScheduleError("phisher '" + p.id + "' declared twice");
    }
    if (!servers.count(p.target_server)) {
      return ScheduleError("phisher '" + p.id + "' targets unknown server '" +
                           p.target_server + "'");
    }
    // Honest servers are never phishers.
    if (servers.count(p.fake_server_id)) {
      return ScheduleError("phisher '" + p.id +
                           "' claims the id of honest server '" +
                           p.fake_server_id + "'");
    }
  }

  auto known_endpoint = [&](std::string_view text) {
    auto ep = adversary::Endpoint::Parse(text);
    if (!ep) return false;
    switch (ep->kind) {
      case adversary::EndpointKind::kServer:
        return servers.count(ep->name) != 0;
      case adversary::EndpointKind::kPhisher:
        return phishers.count(ep->name) != 0;
      case adversary::EndpointKind::kDeviceB:
      case adversary::EndpointKind::kDeviceA:
        return names.count(ep->name) != 0;
      case adversary::EndpointKind::kAdversary:
        return true;
    }
    return false;
  };

  size_t transactions = 0;
  for (size_t i = 0; i < schedule.steps.size(); ++i) {
    const Action& a = schedule.steps[i];
    auto fail = [&](const std::string& what) {
      return ScheduleError("step " + std::to_string(i + 1) + " (" +
                           a.ToString() + "): " + what);
    };
    const bool uses_account =
        a.kind == ActionKind::kRegister || a.kind == ActionKind::kInitiate ||
        a.kind == ActionKind::kPhish || a.kind == ActionKind::kInjectRequest ||
        a.kind == ActionKind::kForgeB || a.kind == ActionKind::kForgeA ||
        a.kind == ActionKind::kCompromise;
    if (uses_account && !names.count(a.target)) {
      return fail("unknown account '" + a.target + "'");
    }
    const bool uses_phisher = a.kind == ActionKind::kPhish ||
                              a.kind == ActionKind::kPhishRelay ||
                              a.kind == ActionKind::kPhishAnswer;
    if (uses_phisher && !phishers.count(a.phisher)) {
      return fail("unknown phisher '" + a.phisher + "'");
    }
    if (a.kind == ActionKind::kInitiate || a.kind == ActionKind::kPhish) {
      ++transactions;
    }
    const bool uses_sel =
        a.kind == ActionKind::kDeliver || a.kind == ActionKind::kDrop ||
        a.kind == ActionKind::kReplay || a.kind == ActionKind::kForward ||
        a.kind == ActionKind::kModify || a.kind == ActionKind::kForgeB ||
        a.kind == ActionKind::kForgeA || a.kind == ActionKind::kPhishRelay ||
        a.kind == ActionKind::kPhishAnswer;
    if (uses_sel && a.sel.kind != Selector::Kind::kIndex &&
        !known_endpoint(a.sel.endpoint)) {
      return fail("unknown endpoint '" + a.sel.endpoint + "'");
    }
    if (a.kind == ActionKind::kPhishAnswer &&
        a.sel2.kind != Selector::Kind::kIndex &&
        !known_endpoint(a.sel2.endpoint)) {
      return fail("unknown endpoint '" + a.sel2.endpoint + "'");
    }
    if ((a.kind == ActionKind::kForward || a.kind == ActionKind::kInject) &&
        !known_endpoint(a.endpoint)) {
      return fail("unknown endpoint '" + a.endpoint + "'");
    }
    if (a.as && !known_endpoint(*a.as)) {
      return fail("unknown endpoint '" + *a.as + "'");
    }
  }
  if (transactions > schedule.bounds.max_transactions) {
    return ScheduleError("more than " +
                         std::to_string(schedule.bounds.max_transactions) +
                         " transactions");
  }
  return Ok{};
}

}  // namespace fido2d::harness
