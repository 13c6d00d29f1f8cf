#ifndef FIDO2D_TRACE_H_
#define FIDO2D_TRACE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fido2d {

// Action labels, one per action fact of the symbolic model.
enum class EventLabel {
  kNewServer,
  kRegistered,
  kTransactionBegin,
  kTransactionComplete,
  kPhishBegin,
  kCompromiseDev1,
  kCompromiseDev2,
};

std::string_view EventLabelName(EventLabel label);
std::optional<EventLabel> ParseEventLabel(std::string_view name);

struct TraceEvent {
  EventLabel label;
  std::string initiator;
  std::string server;
  std::string transaction;
  uint64_t step = 0;

  bool operator==(const TraceEvent&) const = default;

  // One JSON object on one line; see docs/log-format.md.
  std::string ToLogLine() const;
};

using Trace = std::vector<TraceEvent>;

// Receives events as they happen. The sink stamps the step number.
using EventSink = std::function<void(TraceEvent)>;

}  // namespace fido2d

#endif  // FIDO2D_TRACE_H_
