#ifndef FIDO2D_SCHEDULE_H_
#define FIDO2D_SCHEDULE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fido2d/crypto.h"
#include "fido2d/devices.h"
#include "fido2d/result.h"

namespace fido2d::harness {

struct Bounds {
  size_t max_steps = 200;
  size_t max_accounts = 3;
  size_t max_transactions = 5;
};

struct AccountDecl {
  std::string name;
  std::string server;
  devices::UserMode mode = devices::UserMode::kCompare;
};

struct PhisherDecl {
  std::string id;
  std::string fake_server_id;
  std::string target_server;
};

// Picks a message out of the network history.
//   <n>            history index n
//   next@<ep>      oldest in-flight message to endpoint ep
//   last@<ep>      newest message ever addressed to ep
struct Selector {
  enum class Kind { kIndex, kNext, kLast };
  Kind kind = Kind::kIndex;
  uint64_t index = 0;
  std::string endpoint;

  static std::optional<Selector> Parse(std::string_view text);
  static Selector Index(uint64_t index) { return {Kind::kIndex, index, ""}; }
  std::string ToString() const;
};

enum class ActionKind {
  kNewServer,
  kRegister,
  kInitiate,
  kPhish,
  kDeliver,
  kDrop,
  kReplay,
  kForward,
  kModify,
  kInject,
  kInjectRequest,
  kForgeB,
  kForgeA,
  kPhishRelay,
  kPhishAnswer,
  kCompromise,
  kObserve,
};

std::string_view ActionKindName(ActionKind kind);

// One scheduler step. Which fields matter depends on `kind`; see
// ToString() for the text form of each.
struct Action {
  ActionKind kind = ActionKind::kObserve;
  std::string target;   // server id, or account name
  std::string phisher;  // phisher id
  std::optional<std::string> data;
  Selector sel;
  Selector sel2;
  std::string endpoint;            // forward/inject destination
  std::optional<std::string> as;   // spoofed origin for injections
  size_t offset = 0;
  Bytes patch;
  devices::Role role = devices::Role::kB;
  bool rebind = false;

  std::string ToString() const;
  static Result<Action> Parse(std::string_view line);
};

struct Schedule {
  uint64_t seed = 0;
  Bounds bounds;
  std::vector<AccountDecl> accounts;
  std::vector<PhisherDecl> phishers;
  std::vector<Action> steps;

  std::string ToString() const;
  const AccountDecl* FindAccount(std::string_view name) const;
  const PhisherDecl* FindPhisher(std::string_view id) const;
};

// Line-oriented text; '#' starts a comment. Header lines:
//   seed <u64>
//   bounds steps=<n> accounts=<n> transactions=<n>
//   account <name> <server> compare|nocompare
//   phisher <id> <fake server id> <target server>
// Every other line is one step (Action::ToString form).
Result<Schedule> ParseSchedule(std::string_view text);

// Checks every reference against the declarations and the bounds. Errors
// are kScheduleError and carry the offending step number.
Result<Ok> ValidateSchedule(const Schedule& schedule);

}  // namespace fido2d::harness

#endif  // FIDO2D_SCHEDULE_H_
