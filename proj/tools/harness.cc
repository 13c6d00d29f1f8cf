#include <cstdint>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "fido2d/explore.h"
#include "fido2d/lemmas.h"
#include "fido2d/net.h"
#include "fido2d/scenarios.h"
#include "fido2d/schedule.h"
#include "fido2d/world.h"

namespace {

using namespace fido2d;
using namespace fido2d::harness;
using Json = nlohmann::ordered_json;

constexpr int kExitViolation = 1;
constexpr int kExitScheduleError = 2;

std::string VerdictLine(const Verdict& v) {
  Json j;
  j["lemma"] = v.lemma;
  j["holds"] = v.holds;
  if (v.counterexample) {
    Json events = Json::array();
    for (const auto& e : *v.counterexample) {
      events.push_back(Json::parse(e.ToLogLine()));
    }
    j["counterexample"] = events;
  }
  return j.dump();
}

struct RunArgs {
  std::string scenario;
  std::string builtin;
  std::optional<uint64_t> seed;
  bool ordered = false;
  bool print_schedule = false;
};

int DoRun(const RunArgs& args) {
  Schedule schedule;
  if (!args.builtin.empty()) {
    bool found = false;
    for (auto& named : BuiltinScenarios()) {
      if (named.name == args.builtin) {
        schedule = std::move(named.schedule);
        found = true;
      }
    }
    if (!found) {
      std::cerr << "unknown built-in scenario '" << args.builtin << "'\n";
      return kExitScheduleError;
    }
  } else {
    std::ifstream in(args.scenario);
    if (!in) {
      std::cerr << "cannot read " << args.scenario << "\n";
      return kExitScheduleError;
    }
    std::stringstream text;
    text << in.rdbuf();
    auto parsed = ParseSchedule(text.str());
    if (!parsed) {
      std::cerr << args.scenario << ": " << parsed.error().ToString() << "\n";
      return kExitScheduleError;
    }
    schedule = std::move(parsed).value();
  }
  if (args.seed) schedule.seed = *args.seed;
  if (args.print_schedule) {
    std::cout << schedule.ToString();
    return 0;
  }

  auto result = Run(schedule);
  if (!result) {
    std::cerr << "schedule error: " << result.error().ToString() << "\n";
    return kExitScheduleError;
  }
  std::cout << result->LogText();
  LemmaOptions lemmas{args.ordered};
  const Verdict v1 = CheckLemma1(result->trace, lemmas);
  const Verdict v2 = CheckLemma2(result->trace, lemmas);
  std::cout << VerdictLine(v1) << "\n" << VerdictLine(v2) << "\n";
  for (const auto& f : result->audit_failures) {
    std::cout << Json{{"audit_failure", f}}.dump() << "\n";
  }
  if (result->internal_error) {
    std::cout << Json{{"internal_error", *result->internal_error}}.dump()
              << "\n";
  }
  std::cout << Json{{"digest", result->log_digest}}.dump() << "\n";
  const bool bad = !v1.holds || !v2.holds || !result->audit_failures.empty() ||
                   result->internal_error;
  return bad ? kExitViolation : 0;
}

struct ExploreArgs {
  std::string threats = "table";
  size_t runs = 10000;
  uint64_t seed = 0;
  unsigned threads = 0;
  size_t max_steps = Bounds{}.max_steps;
  bool ordered = false;
  bool no_shrink = false;
};

int DoExplore(const ExploreArgs& args) {
  auto configs = ParseThreats(args.threats);
  if (!configs) {
    std::cerr << configs.error().ToString() << "\n";
    return kExitScheduleError;
  }
  ExploreOptions options;
  options.seed = args.seed;
  options.runs = args.runs;
  options.threads = args.threads;
  options.bounds.max_steps = args.max_steps;
  options.lemmas.ordered = args.ordered;
  options.shrink = !args.no_shrink;

  std::vector<ExploreReport> reports;
  bool ok = true;
  for (const auto& config : *configs) {
    reports.push_back(Explore(config, options));
    const auto& r = reports.back();
    ok = ok && r.ok();
    std::cerr << config.Name() << ": " << r.runs << " runs, "
              << r.lemma1_violations + r.lemma2_violations
              << " violating, digest " << r.digest.substr(0, 16) << "\n";
  }
  std::cout << FormatTable(reports) << "\n";
  for (const auto& r : reports) {
    std::cout << Json{{"config", r.config.Name()}, {"digest", r.digest}}.dump()
              << "\n";
  }
  for (const auto& r : reports) {
    if (!r.counterexample) continue;
    const auto& c = *r.counterexample;
    std::cout << "\ncounterexample for " << r.config.Name() << " (run "
              << c.run_index << ", " << c.verdict.lemma << ", "
              << c.trace.size() << " events"
              << (r.config.SecurityClaimed() ? "" : ", expected") << "):\n";
    std::cout << c.schedule.ToString();
    for (const auto& e : c.trace) std::cout << e.ToLogLine() << "\n";
    for (const auto& f : r.first_audit_failures) {
      std::cout << "audit: " << f << "\n";
    }
  }
  return ok ? 0 : kExitViolation;
}

int DoDemo(uint64_t seed) {
  const std::string server_id = "s0";
  const std::string user = "alice";
  const std::string text = "pay 10 to bob";
  net::ServerHost host(server::ServerConfig{server_id}, seed, std::cout);
  auto bound = host.Start(net::HostPort{"127.0.0.1", 0});
  if (!bound) {
    std::cerr << bound.error().ToString() << "\n";
    return 1;
  }
  std::cout << "# server " << server_id << " on " << bound->ToString()
            << std::endl;

  std::promise<std::string> link_code;
  std::promise<bool> a_ready;
  int a_status = 0;
  std::thread device_a([&] {
    auto conn = net::Connection::Dial(*bound);
    if (!conn) {
      a_ready.set_value(false);
      a_status = 1;
      return;
    }
    net::DeviceAClient a(std::move(conn).value(), server_id, seed + 2);
    auto code = link_code.get_future().get();
    auto linked = a.Link(code, true);
    a_ready.set_value(linked.has_value());
    if (!linked) {
      std::cout << "# device A: " << linked.error().ToString() << std::endl;
      a_status = 1;
      return;
    }
    std::cout << "# device A linked" << std::endl;
    auto result = a.ServeOne([](std::string_view server, std::string_view d) {
      std::cout << "# device A shows [" << server << "] \"" << d
                << "\": confirm" << std::endl;
      return true;
    });
    if (!result) {
      std::cout << "# device A: " << result.error().ToString() << std::endl;
      a_status = 1;
      return;
    }
    std::cout << "# transaction \"" << result->transaction_data << "\" "
              << (result->accepted ? "accepted" : "rejected") << std::endl;
    if (!result->accepted) a_status = 1;
  });

  int status = 0;
  auto conn = net::Connection::Dial(*bound);
  if (!conn) {
    std::cerr << conn.error().ToString() << "\n";
    link_code.set_value("");
    status = 1;
  } else {
    net::DeviceBClient b(std::move(conn).value(), user, server_id, seed + 1);
    auto code = b.Register([] { return true; });
    if (!code) {
      std::cout << "# device B: " << code.error().ToString() << std::endl;
      link_code.set_value("");
      status = 1;
    } else {
      std::cout << "# device B registered, link code " << *code << std::endl;
      link_code.set_value(*code);
      if (a_ready.get_future().get()) {
        auto st = b.Transact(text, [] { return true; });
        if (st) {
          std::cout << "# device B: " << *st << std::endl;
        } else {
          std::cout << "# device B: " << st.error().ToString() << std::endl;
          status = 1;
        }
      } else {
        status = 1;
      }
    }
  }
  device_a.join();
  host.Stop();
  return status != 0 || a_status != 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-device authentication harness"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run one schedule and check lemmas");
  auto* source = run->add_option_group("source");
  source->add_option("--scenario", run_args.scenario, "Schedule file")
      ->check(CLI::ExistingFile);
  source->add_option("--builtin", run_args.builtin,
                     "Built-in scenario: honest, manipulation-nocompare, "
                     "manipulation-compare, initiation, dual-compromise, "
                     "phishing-relay, replay");
  source->require_option(1);
  run->add_option("--seed", run_args.seed, "Override the schedule's seed");
  run->add_flag("--ordered", run_args.ordered,
                "Require compromises to precede the completion");
  run->add_flag("--print-schedule", run_args.print_schedule,
                "Print the schedule instead of running it");

  ExploreArgs explore_args;
  auto* explore =
      app.add_subcommand("explore", "Randomized schedules per threat config");
  explore
      ->add_option("--threats", explore_args.threats,
                   "Configs separated by ';' (e.g. "
                   "\"compare+compromise-b;nocompare+phishing\") or 'table'")
      ->capture_default_str();
  explore->add_option("--runs", explore_args.runs)->capture_default_str();
  explore->add_option("--seed", explore_args.seed)->capture_default_str();
  explore->add_option("--threads", explore_args.threads,
                      "0 uses every hardware thread")
      ->capture_default_str();
  explore->add_option("--max-steps", explore_args.max_steps)
      ->capture_default_str()
      ->check(CLI::Range(12, 100000));
  explore->add_flag("--ordered", explore_args.ordered);
  explore->add_flag("--no-shrink", explore_args.no_shrink);

  uint64_t demo_seed = 1;
  auto* demo = app.add_subcommand(
      "demo", "Server and both devices over local TCP, honest flow");
  demo->add_option("--seed", demo_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return DoRun(run_args);
    if (*explore) return DoExplore(explore_args);
    if (*demo) return DoDemo(demo_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
