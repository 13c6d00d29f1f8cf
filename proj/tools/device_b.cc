#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fido2d/net.h"

namespace {

bool AskYes(const std::string& question) {
  std::cout << question << " [y/n] " << std::flush;
  std::string answer;
  if (!std::getline(std::cin, answer)) return false;
  return answer == "y" || answer == "Y" || answer == "yes";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device B: browser and authenticator"};
  std::string server;
  std::string user;
  std::string server_id = "s0";
  uint64_t seed = 2;
  app.add_option("--server", server, "host:port")->required();
  app.add_option("--user", user)->required();
  app.add_option("--server-id", server_id,
                 "Origin the browser shows for this server")
      ->capture_default_str();
  app.add_option("--seed", seed)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  auto address = fido2d::net::HostPort::Parse(server);
  if (!address) {
    std::cerr << address.error().ToString() << "\n";
    return 2;
  }
  auto conn = fido2d::net::Connection::Dial(*address);
  if (!conn) {
    std::cerr << conn.error().ToString() << "\n";
    return 1;
  }
  fido2d::net::DeviceBClient b(std::move(conn).value(), user, server_id, seed);

  auto code = b.Register([] { return AskYes("Create a credential?"); });
  if (!code) {
    std::cerr << "registration: " << code.error().ToString() << "\n";
    return 1;
  }
  std::cout << "Link code for device A: " << *code << "\n";

  while (true) {
    std::cout << "Transaction text (empty to quit): " << std::flush;
    std::string text;
    if (!std::getline(std::cin, text) || text.empty()) break;
    auto status = b.Transact(text, [] { return AskYes("Sign in?"); });
    if (status) {
      std::cout << *status << "\n";
    } else {
      std::cout << "failed: " << status.error().ToString() << "\n";
    }
  }
  return 0;
}
