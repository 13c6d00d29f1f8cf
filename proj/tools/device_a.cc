#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fido2d/net.h"

int main(int argc, char** argv) {
  CLI::App app{"Device A: confirms transactions on its own display"};
  std::string server;
  std::string link;
  std::string server_id = "s0";
  uint64_t seed = 3;
  app.add_option("--server", server, "host:port")->required();
  app.add_option("--link", link, "Link code shown by device B")->required();
  app.add_option("--server-id", server_id)->capture_default_str();
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
  fido2d::net::DeviceAClient a(std::move(conn).value(), server_id, seed);
  if (auto linked = a.Link(link, true); !linked) {
    std::cerr << "link: " << linked.error().ToString() << "\n";
    return 1;
  }
  std::cout << "Linked. Waiting for transactions.\n";

  while (true) {
    auto result = a.ServeOne([](std::string_view server_id,
                                std::string_view text) {
      std::cout << "[" << server_id << "] " << text << "\nConfirm? [y/n] "
                << std::flush;
      std::string answer;
      if (!std::getline(std::cin, answer)) return false;
      return answer == "y" || answer == "Y" || answer == "yes";
    });
    if (result) {
      std::cout << "\"" << result->transaction_data << "\" "
                << (result->accepted ? "accepted" : "rejected") << "\n";
      continue;
    }
    if (result.error().code == fido2d::ErrorCode::kTransport) break;
    std::cout << result.error().ToString() << "\n";
  }
  return 0;
}
