#include <csignal>
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fido2d/net.h"

int main(int argc, char** argv) {
  CLI::App app{"Relying party over local TCP"};
  std::string listen;
  std::string server_id = "s0";
  uint64_t seed = 1;
  uint64_t budget = fido2d::server::kDefaultPendingStepBudget;
  app.add_option("--listen", listen, "host:port; port 0 picks a free one")
      ->required();
  app.add_option("--server-id", server_id)->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  app.add_option("--pending-budget", budget,
                 "Messages a pending transaction may wait before it expires")
      ->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  auto address = fido2d::net::HostPort::Parse(listen);
  if (!address) {
    std::cerr << address.error().ToString() << "\n";
    return 2;
  }

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t stop;
  sigemptyset(&stop);
  sigaddset(&stop, SIGINT);
  sigaddset(&stop, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop, nullptr);

  fido2d::net::ServerHost host(fido2d::server::ServerConfig{server_id, budget},
                               seed, std::cout);
  auto bound = host.Start(*address);
  if (!bound) {
    std::cerr << bound.error().ToString() << "\n";
    return 1;
  }
  std::cerr << "listening on " << bound->ToString() << " as " << server_id
            << "\n";
  int signal = 0;
  sigwait(&stop, &signal);
  host.Stop();
  return 0;
}
