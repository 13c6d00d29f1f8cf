#include "fido2d/trace.h"

#include <array>
#include <utility>

#include <nlohmann/json.hpp>

namespace fido2d {
namespace {

constexpr std::array<std::pair<EventLabel, std::string_view>, 7> kLabels{{
    {EventLabel::kNewServer, "NewServer"},
    {EventLabel::kRegistered, "Registered"},
    {EventLabel::kTransactionBegin, "TransactionBegin"},
    {EventLabel::kTransactionComplete, "TransactionComplete"},
    {EventLabel::kPhishBegin, "PhishBegin"},
    {EventLabel::kCompromiseDev1, "CompromiseDev1"},
    {EventLabel::kCompromiseDev2, "CompromiseDev2"},
}};

}  // namespace

std::string_view EventLabelName(EventLabel label) {
  for (const auto& [l, name] : kLabels) {
    if (l == label) {
      return name;
    }
  }
  return "Unknown";
}

std::optional<EventLabel> ParseEventLabel(std::string_view name) {
  for (const auto& [l, n] : kLabels) {
    if (n == name) {
      return l;
    }
  }
  return std::nullopt;
}

std::string TraceEvent::ToLogLine() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["event"] = EventLabelName(label);
  j["initiator"] = initiator;
  j["server"] = server;
  j["transaction"] = transaction;
  return j.dump();
}

}  // namespace fido2d
