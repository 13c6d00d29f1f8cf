#include "fido2d/server.h"

#include <gtest/gtest.h>

#include "fido2d/devices.h"

namespace fido2d::server {
namespace {

using devices::DeviceA;
using devices::DeviceB;
using devices::UserMode;
using devices::UserModel;
using messages::Assertion;
using messages::AuthenticatorData;
using messages::TransactionOptions;

// One server and alice's two devices, wired by hand.
class ServerTest : public ::testing::Test {
 protected:
  ServerTest()
      : server_(ServerConfig{"s0", 10}, crypto::Rng(1), registry_,
                [this](TraceEvent e) { events_.push_back(e); }),
        b_("alice", "s0"),
        a_("alice", "s0") {}

  void Register() {
    auto opt = server_.BeginRegistration("alice");
    ASSERT_TRUE(opt);
    auto cred = b_.CreateCredential(*opt, true, rng_);
    ASSERT_TRUE(cred);
    auto link = server_.FinishRegistrationB("alice", cred->first, cred->second);
    ASSERT_TRUE(link);
    auto response = a_.Link(link->value.ToHex(), true, rng_);
    ASSERT_TRUE(response);
    auto user = server_.FinishRegistrationA(
        response->link_nonce, response->public_key, response->attestation);
    ASSERT_TRUE(user);
    ASSERT_EQ(*user, "alice");
  }

  // Signs with an arbitrary key pair, for assertions no honest device would
  // make.
  static Assertion Craft(const crypto::KeyPair& key, AuthenticatorData data,
                         const crypto::Nonce& challenge) {
    const Bytes payload = *messages::SignedPayload(data, challenge);
    return Assertion{std::move(data), crypto::Sign(key.secret, payload)};
  }

  size_t Count(EventLabel label) const {
    size_t n = 0;
    for (const auto& e : events_) n += e.label == label;
    return n;
  }

  crypto::NonceRegistry registry_;
  Trace events_;
  RelyingParty server_;
  crypto::Rng rng_{2};
  DeviceB b_;
  DeviceA a_;
};

TEST_F(ServerTest, HonestTransactionCompletes) {
  Register();
  EXPECT_TRUE(server_.FindAccount("alice")->active());
  EXPECT_FALSE(server_.FindAccount("alice")->link_nonce);

  auto opt = server_.BeginTransaction("alice", "pay 10 to bob");
  ASSERT_TRUE(opt);
  EXPECT_FALSE(opt->transaction_data);
  EXPECT_EQ(opt->server_id, "s0");
  auto sig_b = b_.SignChallenge(*opt, true);
  ASSERT_TRUE(sig_b);
  auto opt_a = server_.FinishTransactionB("alice", opt->challenge, *sig_b);
  ASSERT_TRUE(opt_a);
  EXPECT_EQ(opt_a->transaction_data, "pay 10 to bob");
  EXPECT_NE(opt_a->challenge, opt->challenge);

  UserModel user(UserMode::kCompare);
  user.Initiate("s0", "pay 10 to bob");
  auto sig_a = a_.ConfirmTransaction(*opt_a, user);
  ASSERT_TRUE(sig_a);
  EXPECT_TRUE(server_.FinishTransactionA("alice", opt_a->challenge, *sig_a));
  EXPECT_EQ(Count(EventLabel::kTransactionComplete), 1u);
  EXPECT_TRUE(server_.Audit().empty());
}

TEST_F(ServerTest, RegistrationRestartInvalidatesOldChallenge) {
  auto first = server_.BeginRegistration("alice");
  auto second = server_.BeginRegistration("alice");
  ASSERT_TRUE(first && second);
  EXPECT_NE(first->challenge, second->challenge);
  auto stale = b_.CreateCredential(*first, true, rng_);
  ASSERT_TRUE(stale);
  auto r = server_.FinishRegistrationB("alice", stale->first, stale->second);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kRegistrationFailed);
}

TEST_F(ServerTest, ReplayedAttestationFails) {
  auto opt = server_.BeginRegistration("alice");
  auto cred = b_.CreateCredential(*opt, true, rng_);
  ASSERT_TRUE(server_.FinishRegistrationB("alice", cred->first, cred->second));
  auto again = server_.FinishRegistrationB("alice", cred->first, cred->second);
  ASSERT_FALSE(again);
  EXPECT_EQ(again.error().code, ErrorCode::kRegistrationFailed);
}

TEST_F(ServerTest, UserVerifiedFalseFailsRegistration) {
  auto opt = server_.BeginRegistration("alice");
  auto key = crypto::Keygen(rng_.NextSeed());
  const Assertion att =
      Craft(*key, AuthenticatorData{"s0", 1, false, std::nullopt},
            opt->challenge);
  auto r = server_.FinishRegistrationB("alice", key->public_key, att);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kRegistrationFailed);
}

TEST_F(ServerTest, ActiveAccountRefusesRegistration) {
  Register();
  auto r = server_.BeginRegistration("alice");
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kRegistrationRefused);
}

TEST_F(ServerTest, LinkNonceIsSingleUse) {
  auto opt = server_.BeginRegistration("alice");
  auto cred = b_.CreateCredential(*opt, true, rng_);
  auto link = server_.FinishRegistrationB("alice", cred->first, cred->second);
  auto response = a_.Link(link->value.ToHex(), true, rng_);
  ASSERT_TRUE(server_.FinishRegistrationA(
      response->link_nonce, response->public_key, response->attestation));
  auto again = server_.FinishRegistrationA(
      response->link_nonce, response->public_key, response->attestation);
  ASSERT_FALSE(again);
  EXPECT_EQ(again.error().code, ErrorCode::kLinkFailed);
}

TEST_F(ServerTest, BadLinkAttestationConsumesNonce) {
  auto opt = server_.BeginRegistration("alice");
  auto cred = b_.CreateCredential(*opt, true, rng_);
  auto link = server_.FinishRegistrationB("alice", cred->first, cred->second);
  auto key = crypto::Keygen(rng_.NextSeed());
  Assertion att = Craft(*key, AuthenticatorData{"s0", 1, true, std::nullopt},
                        link->value);
  att.signature.bytes[0] ^= 1;
  EXPECT_FALSE(
      server_.FinishRegistrationA(link->value, key->public_key, att));
  auto good = a_.Link(link->value.ToHex(), true, rng_);
  auto r = server_.FinishRegistrationA(good->link_nonce, good->public_key,
                                       good->attestation);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kLinkFailed);
}

TEST_F(ServerTest, LinkNonceBindsToItsOwnAccount) {
  Register();
  DeviceB bob_b("bob", "s0");
  DeviceA bob_a("bob", "s0");
  auto opt = server_.BeginRegistration("bob");
  auto cred = bob_b.CreateCredential(*opt, true, rng_);
  auto link = server_.FinishRegistrationB("bob", cred->first, cred->second);
  const auto alice_a = *server_.FindAccount("alice")->pub_a;
  auto response = bob_a.Link(link->value.ToHex(), true, rng_);
  auto user = server_.FinishRegistrationA(
      response->link_nonce, response->public_key, response->attestation);
  ASSERT_TRUE(user);
  EXPECT_EQ(*user, "bob");
  EXPECT_EQ(server_.FindAccount("bob")->pub_a, response->public_key);
  EXPECT_EQ(server_.FindAccount("alice")->pub_a, alice_a);
}

TEST_F(ServerTest, InactiveAccountRefusesTransactions) {
  auto r = server_.BeginTransaction("alice", "pay 10 to bob");
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionRefused);
}

TEST_F(ServerTest, ConcurrentBeginsAreDistinct) {
  Register();
  auto t1 = server_.BeginTransaction("alice", "pay 10 to bob");
  auto t2 = server_.BeginTransaction("alice", "pay 10 to bob");
  ASSERT_TRUE(t1 && t2);
  EXPECT_NE(t1->challenge, t2->challenge);
  const auto* p1 = server_.FindPendingByChallenge(t1->challenge);
  const auto* p2 = server_.FindPendingByChallenge(t2->challenge);
  ASSERT_TRUE(p1 && p2);
  EXPECT_NE(p1->id, p2->id);

  // Either can finish first.
  auto s2 = b_.SignChallenge(*t2, true);
  EXPECT_TRUE(server_.FinishTransactionB("alice", t2->challenge, *s2));
  auto s1 = b_.SignChallenge(*t1, true);
  EXPECT_TRUE(server_.FinishTransactionB("alice", t1->challenge, *s1));
}

TEST_F(ServerTest, WrongKeyAborts) {
  Register();
  auto opt = server_.BeginTransaction("alice", "pay 10 to bob");
  // Device A's key where B's is expected.
  const auto leak = a_.Compromise();
  const Assertion forged = Craft(
      *leak.key, AuthenticatorData{"s0", 5, true, std::nullopt},
      opt->challenge);
  auto r = server_.FinishTransactionB("alice", opt->challenge, forged);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionAborted);
  EXPECT_EQ(server_.FindPendingByChallenge(opt->challenge), nullptr);
  EXPECT_EQ(server_.pending().begin()->second.state, PendingState::kAborted);
}

TEST_F(ServerTest, CounterMustIncrease) {
  Register();
  const auto leak = b_.Compromise();
  const uint32_t current = *leak.counter;
  auto opt = server_.BeginTransaction("alice", "pay 10 to bob");
  const Assertion cloned = Craft(
      *leak.key, AuthenticatorData{"s0", current, true, std::nullopt},
      opt->challenge);
  auto r = server_.FinishTransactionB("alice", opt->challenge, cloned);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionAborted);

  auto opt2 = server_.BeginTransaction("alice", "pay 10 to bob");
  const Assertion ahead = Craft(
      *leak.key, AuthenticatorData{"s0", current + 7, true, std::nullopt},
      opt2->challenge);
  EXPECT_TRUE(server_.FinishTransactionB("alice", opt2->challenge, ahead));
}

TEST_F(ServerTest, ServerIdAndUserVerifiedChecked) {
  Register();
  const auto leak = b_.Compromise();
  for (const auto& data :
       {AuthenticatorData{"s0-login", 9, true, std::nullopt},
        AuthenticatorData{"s0", 9, false, std::nullopt},
        AuthenticatorData{"s0", 9, true, std::string("pay 10 to bob")}}) {
    auto opt = server_.BeginTransaction("alice", "pay 10 to bob");
    auto r = server_.FinishTransactionB("alice", opt->challenge,
                                        Craft(*leak.key, data, opt->challenge));
    EXPECT_FALSE(r);
  }
}

class ServerAStepTest : public ServerTest {
 protected:
  void SetUp() override {
    Register();
    opt_ = *server_.BeginTransaction("alice", "pay 10 to bob");
    auto sig = b_.SignChallenge(opt_, true);
    opt_a_ = *server_.FinishTransactionB("alice", opt_.challenge, *sig);
  }
  TransactionOptions opt_;
  TransactionOptions opt_a_;
};

TEST_F(ServerAStepTest, ManipulatedTextAborts) {
  const auto leak = a_.Compromise();
  const Assertion forged =
      Craft(*leak.key,
            AuthenticatorData{"s0", *leak.counter + 1, true,
                              std::string("pay 1000 to mallory")},
            opt_a_.challenge);
  auto r = server_.FinishTransactionA("alice", opt_a_.challenge, forged);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionAborted);
  EXPECT_EQ(Count(EventLabel::kTransactionComplete), 0u);
}

TEST_F(ServerAStepTest, ReplayedAssertionAgainstNewTransactionAborts) {
  UserModel user(UserMode::kCompare);
  user.Initiate("s0", "pay 10 to bob");
  auto sig_a = a_.ConfirmTransaction(opt_a_, user);
  ASSERT_TRUE(server_.FinishTransactionA("alice", opt_a_.challenge, *sig_a));

  auto again = server_.FinishTransactionA("alice", opt_a_.challenge, *sig_a);
  ASSERT_FALSE(again);
  EXPECT_EQ(again.error().code, ErrorCode::kUnknownChallenge);

  auto opt2 = *server_.BeginTransaction("alice", "pay 10 to bob");
  auto sig_b2 = b_.SignChallenge(opt2, true);
  auto opt2_a = *server_.FinishTransactionB("alice", opt2.challenge, *sig_b2);
  auto r = server_.FinishTransactionA("alice", opt2_a.challenge, *sig_a);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionAborted);
  EXPECT_EQ(Count(EventLabel::kTransactionComplete), 1u);
}

TEST_F(ServerAStepTest, BChallengeCannotCompleteAStep) {
  const auto leak = a_.Compromise();
  const Assertion forged = Craft(
      *leak.key,
      AuthenticatorData{"s0", *leak.counter + 1, true,
                        std::string("pay 10 to bob")},
      opt_.challenge);
  EXPECT_FALSE(server_.FinishTransactionA("alice", opt_.challenge, forged));
}

TEST_F(ServerAStepTest, StalePendingExpires) {
  const uint64_t start = server_.step();
  server_.AdvanceTo(start + 10);
  const auto& p = server_.pending().begin()->second;
  EXPECT_EQ(p.state, PendingState::kAborted);
  EXPECT_EQ(p.abort_reason, "expired");
  UserModel user(UserMode::kCompare);
  user.Initiate("s0", "pay 10 to bob");
  auto sig_a = a_.ConfirmTransaction(opt_a_, user);
  EXPECT_FALSE(server_.FinishTransactionA("alice", opt_a_.challenge, *sig_a));
}

TEST_F(ServerTest, DispatchRoutesByChallenge) {
  Register();
  auto out = Dispatch(server_, messages::TransactionRequest{"alice", "x"});
  ASSERT_TRUE(out.reply);
  const auto& reply = std::get<messages::ChallengeReply>(*out.reply);
  EXPECT_EQ(reply.request.transaction_data, "x");
  auto sig = b_.SignChallenge(reply.options, true);
  out = Dispatch(server_, messages::AssertionResponse{
                              "alice", reply.options.challenge, *sig});
  ASSERT_TRUE(out.push);
  EXPECT_EQ(out.push_username, "alice");
  EXPECT_EQ(out.push->transaction_data, "x");

  out = Dispatch(server_, messages::AssertionResponse{
                              "alice", reply.options.challenge, *sig});
  EXPECT_FALSE(out.push);
  ASSERT_TRUE(out.error);
  EXPECT_EQ(out.error->code, ErrorCode::kUnknownChallenge);
  ASSERT_TRUE(out.reply);
  EXPECT_FALSE(std::get<messages::StatusReply>(*out.reply).ok);
}

}  // namespace
}  // namespace fido2d::server
