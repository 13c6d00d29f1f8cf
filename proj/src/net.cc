#include "fido2d/net.h"

#include <array>
#include <charconv>
#include <iostream>

#include <boost/asio/connect.hpp>
#include <boost/asio/read.hpp>
#include <boost/asio/write.hpp>

namespace fido2d::net {

namespace asio = boost::asio;
using asio::ip::tcp;

namespace {

Error TransportError(const boost::system::error_code& ec) {
  return MakeError(ErrorCode::kTransport, ec.message());
}

// A StatusReply in place of the expected message means the server refused.
Error Refusal(const messages::Message& m, std::string_view expected) {
  if (const auto* s = std::get_if<messages::StatusReply>(&m)) {
    return MakeError(ErrorCode::kTransactionRefused, s->detail);
  }
  return MakeError(ErrorCode::kMalformed,
                   "expected " + std::string(expected) + ", got " +
                       std::string(messages::MessageName(m)));
}

}  // namespace

Result<HostPort> HostPort::Parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    return MakeError(ErrorCode::kInvalidInput,
                     "expected host:port, got '" + std::string(text) + "'");
  }
  HostPort hp;
  hp.host = std::string(text.substr(0, colon));
  const auto port = text.substr(colon + 1);
  unsigned value = 0;
  auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc() || end != port.data() + port.size() || value > 65535) {
    return MakeError(ErrorCode::kInvalidInput,
                     "bad port '" + std::string(port) + "'");
  }
  hp.port = static_cast<uint16_t>(value);
  return hp;
}

std::string HostPort::ToString() const {
  return host + ":" + std::to_string(port);
}

Connection::Connection(tcp::socket socket) : socket_(std::move(socket)) {}

Connection::Connection(std::unique_ptr<asio::io_context> context,
                       tcp::socket socket)
    : owned_context_(std::move(context)), socket_(std::move(socket)) {}

Result<std::unique_ptr<Connection>> Connection::Dial(const HostPort& address) {
  auto context = std::make_unique<asio::io_context>();
  tcp::resolver resolver(*context);
  boost::system::error_code ec;
  auto endpoints =
      resolver.resolve(address.host, std::to_string(address.port), ec);
  if (ec) return TransportError(ec);
  tcp::socket socket(*context);
  asio::connect(socket, endpoints, ec);
  if (ec) return TransportError(ec);
  return std::make_unique<Connection>(std::move(context), std::move(socket));
}

Result<Ok> Connection::Send(const messages::Message& message) {
  auto body = messages::Encode(message);
  if (!body) return body.error();
  if (body->size() > kMaxFrame) {
    return MakeError(ErrorCode::kTransport, "frame too large");
  }
  const uint32_t n = static_cast<uint32_t>(body->size());
  std::array<uint8_t, 4> header = {
      static_cast<uint8_t>(n >> 24), static_cast<uint8_t>(n >> 16),
      static_cast<uint8_t>(n >> 8), static_cast<uint8_t>(n)};
  std::array<asio::const_buffer, 2> buffers = {asio::buffer(header),
                                               asio::buffer(*body)};
  std::lock_guard lock(write_mutex_);
  boost::system::error_code ec;
  asio::write(socket_, buffers, ec);
  if (ec) return TransportError(ec);
  return Ok{};
}

Result<messages::Message> Connection::Receive() {
  std::array<uint8_t, 4> header{};
  boost::system::error_code ec;
  asio::read(socket_, asio::buffer(header), ec);
  if (ec) return TransportError(ec);
  const uint32_t n = (uint32_t{header[0]} << 24) | (uint32_t{header[1]} << 16) |
                     (uint32_t{header[2]} << 8) | uint32_t{header[3]};
  if (n > kMaxFrame) {
    return MakeError(ErrorCode::kTransport, "frame too large");
  }
  Bytes body(n);
  asio::read(socket_, asio::buffer(body), ec);
  if (ec) return TransportError(ec);
  auto m = messages::Decode(body);
  if (!m) return MakeError(ErrorCode::kMalformed, m.error().ToString());
  return std::move(m).value();
}

void Connection::Close() {
  boost::system::error_code ec;
  socket_.shutdown(tcp::socket::shutdown_both, ec);
}

ServerHost::ServerHost(server::ServerConfig config, uint64_t seed,
                       std::ostream& log)
    : acceptor_(context_),
      log_(log),
      server_(std::move(config),
              crypto::Rng(seed).Fork("server"), registry_,
              [this](TraceEvent e) {
                e.step = ++events_;
                Log(e.ToLogLine());
              }) {}

ServerHost::~ServerHost() { Stop(); }

Result<HostPort> ServerHost::Start(const HostPort& listen) {
  boost::system::error_code ec;
  auto address = asio::ip::make_address(listen.host, ec);
  if (ec) {
    tcp::resolver resolver(context_);
    auto found = resolver.resolve(listen.host, std::to_string(listen.port), ec);
    if (ec || found.empty()) return TransportError(ec);
    address = found.begin()->endpoint().address();
  }
  tcp::endpoint endpoint(address, listen.port);
  acceptor_.open(endpoint.protocol(), ec);
  if (ec) return TransportError(ec);
  acceptor_.set_option(tcp::acceptor::reuse_address(true), ec);
  acceptor_.bind(endpoint, ec);
  if (ec) return TransportError(ec);
  acceptor_.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) return TransportError(ec);
  HostPort bound{listen.host, acceptor_.local_endpoint().port()};
  accept_thread_ = std::thread([this] { AcceptLoop(); });
  return bound;
}

void ServerHost::Stop() {
  if (stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) {
    // A blocking accept is not reliably woken by close(); connect to
    // ourselves instead.
    boost::system::error_code ec;
    auto local = acceptor_.local_endpoint(ec);
    if (!ec) {
      asio::io_context ctx;
      tcp::socket wake(ctx);
      if (local.address().is_unspecified()) {
        local.address(local.protocol() == tcp::v4()
                          ? asio::ip::address(asio::ip::address_v4::loopback())
                          : asio::ip::address(asio::ip::address_v6::loopback()));
      }
      wake.connect(local, ec);
    }
    accept_thread_.join();
  }
  boost::system::error_code ec;
  acceptor_.close(ec);
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(threads_mutex_);
    for (auto& weak : sessions_) {
      if (auto c = weak.lock()) c->Close();
    }
    threads.swap(session_threads_);
  }
  for (auto& t : threads) t.join();
}

void ServerHost::AcceptLoop() {
  while (!stopping_) {
    tcp::socket socket(context_);
    boost::system::error_code ec;
    acceptor_.accept(socket, ec);
    if (stopping_) break;
    if (ec) continue;
    auto connection = std::make_shared<Connection>(std::move(socket));
    std::lock_guard lock(threads_mutex_);
    sessions_.push_back(connection);
    session_threads_.emplace_back(
        [this, connection] { Serve(connection); });
  }
}

void ServerHost::Serve(std::shared_ptr<Connection> connection) {
  while (!stopping_) {
    auto message = connection->Receive();
    if (!message) break;
    server::DispatchOutcome out;
    std::shared_ptr<Connection> push_to;
    {
      std::lock_guard lock(mutex_);
      try {
        server_.AdvanceTo(++clock_);
        out = server::Dispatch(server_, *message);
      } catch (const crypto::InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        break;
      }
      if (std::holds_alternative<messages::LinkResponse>(*message) &&
          out.reply &&
          std::holds_alternative<messages::AccountActive>(*out.reply)) {
        push_channels_[std::get<messages::AccountActive>(*out.reply).username] =
            connection;
      }
      if (out.push) {
        auto it = push_channels_.find(out.push_username);
        if (it != push_channels_.end()) push_to = it->second.lock();
      }
    }
    if (out.reply && !connection->Send(*out.reply)) break;
    if (out.push) {
      if (!push_to || !push_to->Send(*out.push)) {
        std::cerr << "no device A connected for " << out.push_username
                  << "\n";
      }
    }
  }
  connection->Close();
}

void ServerHost::Log(const std::string& line) {
  std::lock_guard lock(log_mutex_);
  log_ << line << std::endl;
}

DeviceBClient::DeviceBClient(std::unique_ptr<Connection> connection,
                             std::string username, std::string server_id,
                             uint64_t seed)
    : connection_(std::move(connection)),
      device_(std::move(username), server_id),
      server_id_(std::move(server_id)),
      rng_(crypto::Rng(seed).Fork("device:b")) {}

Result<std::string> DeviceBClient::Register(
    const std::function<bool()>& consent) {
  if (auto s = connection_->Send(
          messages::RegistrationRequest{device_.username()});
      !s) {
    return s.error();
  }
  auto reply = connection_->Receive();
  if (!reply) return reply.error();
  const auto* options = std::get_if<messages::RegistrationOptions>(&*reply);
  if (!options) return Refusal(*reply, "RegistrationOptions");
  auto created = device_.CreateCredential(*options, consent(), rng_);
  if (!created) return created.error();
  if (auto s = connection_->Send(messages::RegistrationResponse{
          device_.username(), created->first, created->second});
      !s) {
    return s.error();
  }
  auto link = connection_->Receive();
  if (!link) return link.error();
  const auto* nonce = std::get_if<messages::LinkNonce>(&*link);
  if (!nonce) return Refusal(*link, "LinkNonce");
  return ToHex(nonce->value.bytes);
}

Result<std::string> DeviceBClient::Transact(
    const std::string& text, const std::function<bool()>& consent) {
  messages::TransactionRequest request{device_.username(), text};
  device_.RecordRequest(server_id_, request);
  if (auto s = connection_->Send(request); !s) return s.error();
  auto reply = connection_->Receive();
  if (!reply) return reply.error();
  const auto* challenge = std::get_if<messages::ChallengeReply>(&*reply);
  if (!challenge) return Refusal(*reply, "ChallengeReply");
  auto response = device_.HandleChallengeReply(server_id_, *challenge,
                                               consent());
  if (!response) return response.error();
  if (auto s = connection_->Send(*response); !s) return s.error();
  auto status = connection_->Receive();
  if (!status) return status.error();
  const auto* st = std::get_if<messages::StatusReply>(&*status);
  if (!st) return Refusal(*status, "StatusReply");
  if (!st->ok) return MakeError(ErrorCode::kTransactionRefused, st->detail);
  return st->detail;
}

DeviceAClient::DeviceAClient(std::unique_ptr<Connection> connection,
                             std::string server_id, uint64_t seed)
    : connection_(std::move(connection)),
      device_("", std::move(server_id)),
      rng_(crypto::Rng(seed).Fork("device:a")) {}

Result<Ok> DeviceAClient::Link(std::string_view code, bool consent) {
  auto response = device_.Link(code, consent, rng_);
  if (!response) return response.error();
  if (auto s = connection_->Send(*response); !s) return s.error();
  auto reply = connection_->Receive();
  if (!reply) return reply.error();
  const auto* active = std::get_if<messages::AccountActive>(&*reply);
  if (!active) return Refusal(*reply, "AccountActive");
  username_ = active->username;
  return Ok{};
}

Result<messages::TransactionResult> DeviceAClient::ServeOne(
    const devices::DeviceA::Decision& decide) {
  auto pushed = connection_->Receive();
  if (!pushed) return pushed.error();
  const auto* options = std::get_if<messages::TransactionOptions>(&*pushed);
  if (!options) return Refusal(*pushed, "TransactionOptions");
  auto assertion = device_.ConfirmTransaction(*options, decide);
  if (!assertion) return assertion.error();
  if (auto s = connection_->Send(messages::AssertionResponse{
          username_, options->challenge, *assertion});
      !s) {
    return s.error();
  }
  auto reply = connection_->Receive();
  if (!reply) return reply.error();
  const auto* result = std::get_if<messages::TransactionResult>(&*reply);
  if (!result) return Refusal(*reply, "TransactionResult");
  return *result;
}

}  // namespace fido2d::net
