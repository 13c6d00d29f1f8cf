#ifndef FIDO2D_NET_H_
#define FIDO2D_NET_H_

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>

#include "fido2d/crypto.h"
#include "fido2d/devices.h"
#include "fido2d/messages.h"
#include "fido2d/result.h"
#include "fido2d/server.h"

namespace fido2d::net {

// Frames are a 4-byte big-endian length followed by one encoded message.
inline constexpr size_t kMaxFrame = 1 << 20;

struct HostPort {
  std::string host;
  uint16_t port = 0;
  static Result<HostPort> Parse(std::string_view text);
  std::string ToString() const;
};

// One framed stream connection.
class Connection {
 public:
  static Result<std::unique_ptr<Connection>> Dial(const HostPort& address);
  explicit Connection(boost::asio::ip::tcp::socket socket);
  Connection(std::unique_ptr<boost::asio::io_context> context,
             boost::asio::ip::tcp::socket socket);

  Result<Ok> Send(const messages::Message& message);
  Result<messages::Message> Receive();
  void Close();

 private:
  std::unique_ptr<boost::asio::io_context> owned_context_;
  boost::asio::ip::tcp::socket socket_;
  std::mutex write_mutex_;
};

// Relying party behind a TCP listener. One thread per connection; calls
// into the relying party are serialized. A connection that completes the
// device-A link becomes that account's push channel.
class ServerHost {
 public:
  ServerHost(server::ServerConfig config, uint64_t seed, std::ostream& log);
  ~ServerHost();

  // Binds and starts accepting on a background thread. Port 0 picks a free
  // one; the bound address is returned.
  Result<HostPort> Start(const HostPort& listen);
  void Stop();

 private:
  void AcceptLoop();
  void Serve(std::shared_ptr<Connection> connection);
  void Log(const std::string& line);

  boost::asio::io_context context_;
  boost::asio::ip::tcp::acceptor acceptor_;
  std::ostream& log_;
  std::mutex log_mutex_;

  std::mutex mutex_;  // guards everything below
  crypto::NonceRegistry registry_;
  server::RelyingParty server_;
  uint64_t clock_ = 0;
  uint64_t events_ = 0;
  std::map<std::string, std::weak_ptr<Connection>> push_channels_;

  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex threads_mutex_;
  std::vector<std::thread> session_threads_;
  std::vector<std::weak_ptr<Connection>> sessions_;
};

// Device B with its browser, talking to one server.
class DeviceBClient {
 public:
  DeviceBClient(std::unique_ptr<Connection> connection, std::string username,
                std::string server_id, uint64_t seed);

  // Registers B and returns the link code to type into device A.
  Result<std::string> Register(const std::function<bool()>& consent);
  // Starts a transaction and answers the first challenge. Returns the
  // server's status line.
  Result<std::string> Transact(const std::string& text,
                               const std::function<bool()>& consent);

 private:
  std::unique_ptr<Connection> connection_;
  devices::DeviceB device_;
  std::string server_id_;
  crypto::Rng rng_;
};

// Device A, linked through a code and then fed options by server pushes.
class DeviceAClient {
 public:
  // The account name is learned from the server when the link completes.
  DeviceAClient(std::unique_ptr<Connection> connection, std::string server_id,
                uint64_t seed);

  Result<Ok> Link(std::string_view code, bool consent);
  // Waits for one pushed confirmation request, asks `decide`, and answers.
  // Returns the server's verdict on the transaction.
  Result<messages::TransactionResult> ServeOne(
      const devices::DeviceA::Decision& decide);

 private:
  std::unique_ptr<Connection> connection_;
  devices::DeviceA device_;
  std::string username_;
  crypto::Rng rng_;
};

}  // namespace fido2d::net

#endif  // FIDO2D_NET_H_
