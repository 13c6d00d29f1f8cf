#include "fido2d/net.h"

#include <future>
#include <sstream>
#include <thread>

#include <boost/asio/write.hpp>
#include <gtest/gtest.h>

namespace fido2d::net {
namespace {

class NetTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto bound = host_.Start(HostPort{"127.0.0.1", 0});
    ASSERT_TRUE(bound) << bound.error().ToString();
    address_ = *bound;
    EXPECT_NE(address_.port, 0);
  }

  std::unique_ptr<Connection> Dial() {
    auto c = Connection::Dial(address_);
    EXPECT_TRUE(c) << c.error().ToString();
    return std::move(c).value();
  }

  std::ostringstream log_;
  ServerHost host_{server::ServerConfig{"s0"}, 1, log_};
  HostPort address_;
};

TEST(HostPort, Parse) {
  auto hp = HostPort::Parse("127.0.0.1:8443");
  ASSERT_TRUE(hp);
  EXPECT_EQ(hp->host, "127.0.0.1");
  EXPECT_EQ(hp->port, 8443);
  EXPECT_EQ(hp->ToString(), "127.0.0.1:8443");
  EXPECT_FALSE(HostPort::Parse("localhost"));
  EXPECT_FALSE(HostPort::Parse(":80"));
  EXPECT_FALSE(HostPort::Parse("h:70000"));
  EXPECT_FALSE(HostPort::Parse("h:8x"));
}

TEST_F(NetTest, HonestFlowOverTcp) {
  DeviceBClient b(Dial(), "alice", "s0", 2);
  auto code = b.Register([] { return true; });
  ASSERT_TRUE(code) << code.error().ToString();

  std::promise<Result<messages::TransactionResult>> result;
  std::promise<void> linked;
  std::thread a_thread([&] {
    DeviceAClient a(Dial(), "s0", 3);
    auto l = a.Link(*code, true);
    EXPECT_TRUE(l) << l.error().ToString();
    linked.set_value();
    std::string shown;
    result.set_value(a.ServeOne([&](std::string_view server,
                                    std::string_view text) {
      shown = std::string(server) + "|" + std::string(text);
      return true;
    }));
    EXPECT_EQ(shown, "s0|pay 10 to bob");
  });
  linked.get_future().wait();
  auto status = b.Transact("pay 10 to bob", [] { return true; });
  ASSERT_TRUE(status) << status.error().ToString();
  auto r = result.get_future().get();
  a_thread.join();
  ASSERT_TRUE(r) << r.error().ToString();
  EXPECT_TRUE(r->accepted);
  EXPECT_EQ(r->transaction_data, "pay 10 to bob");

  host_.Stop();
  const std::string log = log_.str();
  EXPECT_NE(log.find("\"event\":\"Registered\""), std::string::npos);
  EXPECT_NE(log.find("\"event\":\"TransactionComplete\""), std::string::npos);
}

TEST_F(NetTest, BadLinkCodeAndDeclinedConsent) {
  DeviceBClient b(Dial(), "alice", "s0", 2);
  auto declined = b.Register([] { return false; });
  ASSERT_FALSE(declined);
  EXPECT_EQ(declined.error().code, ErrorCode::kUserDeclined);

  DeviceAClient a(Dial(), "s0", 3);
  auto bad = a.Link("00ff", true);
  ASSERT_FALSE(bad);
  EXPECT_EQ(bad.error().code, ErrorCode::kLinkInputError);
  crypto::Nonce unknown;
  auto stale = a.Link(unknown.ToHex(), true);
  ASSERT_FALSE(stale);
  EXPECT_EQ(stale.error().code, ErrorCode::kTransactionRefused);
}

TEST_F(NetTest, TransactionOnInactiveAccountRefused) {
  DeviceBClient b(Dial(), "bob", "s0", 2);
  auto r = b.Transact("pay 10 to bob", [] { return true; });
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionRefused);
}

TEST_F(NetTest, OversizedFrameClosesConnection) {
  boost::asio::io_context ctx;
  boost::asio::ip::tcp::socket raw(ctx);
  raw.connect({boost::asio::ip::make_address(address_.host), address_.port});
  const uint8_t header[4] = {0x7f, 0xff, 0xff, 0xff};
  boost::asio::write(raw, boost::asio::buffer(header));
  uint8_t byte;
  boost::system::error_code ec;
  raw.read_some(boost::asio::buffer(&byte, 1), ec);
  EXPECT_TRUE(ec);  // closed by the server
}

}  // namespace
}  // namespace fido2d::net
