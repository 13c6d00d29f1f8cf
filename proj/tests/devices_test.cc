#include "fido2d/devices.h"

#include <gtest/gtest.h>

#include "fido2d/server.h"

namespace fido2d::devices {
namespace {

using messages::ChallengeReply;
using messages::RegistrationOptions;
using messages::TransactionOptions;
using messages::TransactionRequest;

crypto::Nonce NonceOf(uint8_t fill) {
  crypto::Nonce n;
  n.bytes.fill(fill);
  return n;
}

TEST(UserModel, CompareNeedsExactIntent) {
  UserModel user(UserMode::kCompare);
  EXPECT_FALSE(user.Confirm("s0", "pay 10 to bob"));
  user.Initiate("s0", "pay 10 to bob");
  EXPECT_FALSE(user.Confirm("s0", "pay 1000 to mallory"));
  EXPECT_FALSE(user.Confirm("s0-login", "pay 10 to bob"));
  EXPECT_TRUE(user.Confirm("s0", "pay 10 to bob"));
  // The intent is spent.
  EXPECT_FALSE(user.Confirm("s0", "pay 10 to bob"));
}

TEST(UserModel, NoCompareNeedsAnyIntent) {
  UserModel user(UserMode::kNoCompare);
  EXPECT_FALSE(user.Confirm("s0", "pay 1000 to mallory"));
  user.Initiate("s0", "pay 10 to bob");
  user.Initiate("s1", "close account");
  EXPECT_TRUE(user.Confirm("s9", "pay 1000 to mallory"));
  ASSERT_EQ(user.intents().size(), 1u);
  EXPECT_EQ(user.intents()[0].data, "close account");
  EXPECT_TRUE(user.Confirm("s0", "anything"));
  EXPECT_FALSE(user.Confirm("s0", "anything"));
}

TEST(UserMode, Parse) {
  EXPECT_EQ(ParseUserMode("compare"), UserMode::kCompare);
  EXPECT_EQ(ParseUserMode("nocompare"), UserMode::kNoCompare);
  EXPECT_EQ(ParseUserMode("no-compare"), UserMode::kNoCompare);
  EXPECT_FALSE(ParseUserMode("maybe"));
}

class DeviceTest : public ::testing::Test {
 protected:
  RegistrationOptions RegOptions() const {
    return RegistrationOptions{NonceOf(1), "s0", "alice"};
  }
  crypto::Rng rng_{5};
  Trace events_;
  EventSink sink_ = [this](TraceEvent e) { events_.push_back(e); };
};

TEST_F(DeviceTest, CreateCredentialAttests) {
  DeviceB b("alice", "s0");
  auto cred = b.CreateCredential(RegOptions(), true, rng_);
  ASSERT_TRUE(cred);
  EXPECT_TRUE(b.has_credential());
  EXPECT_EQ(b.public_key(), cred->first);
  const auto& att = cred->second;
  EXPECT_TRUE(att.auth_data.user_verified);
  EXPECT_EQ(att.auth_data.server_id, "s0");
  EXPECT_TRUE(crypto::Verify(
      cred->first, *messages::SignedPayload(att.auth_data, NonceOf(1)),
      att.signature));
}

TEST_F(DeviceTest, DeclinedConsentCreatesNothing) {
  DeviceB b("alice", "s0");
  auto cred = b.CreateCredential(RegOptions(), false, rng_);
  ASSERT_FALSE(cred);
  EXPECT_EQ(cred.error().code, ErrorCode::kUserDeclined);
  EXPECT_FALSE(b.has_credential());
  EXPECT_TRUE(b.signed_records().empty());
}

TEST_F(DeviceTest, TwoRegistrationsTwoKeys) {
  DeviceB b1("alice", "s0"), b2("alice", "s0");
  auto k1 = b1.CreateCredential(RegOptions(), true, rng_);
  auto k2 = b2.CreateCredential(RegOptions(), true, rng_);
  EXPECT_NE(k1->first, k2->first);
}

TEST_F(DeviceTest, SignChallengeNeedsCredentialAndConsent) {
  DeviceB b("alice", "s0");
  const TransactionOptions opt{NonceOf(2), "s0", std::nullopt};
  auto r = b.SignChallenge(opt, true);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kNoCredential);
  ASSERT_TRUE(b.CreateCredential(RegOptions(), true, rng_));
  r = b.SignChallenge(opt, false);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kUserDeclined);
}

TEST_F(DeviceTest, CounterIncreasesOnEverySignature) {
  DeviceB b("alice", "s0");
  ASSERT_TRUE(b.CreateCredential(RegOptions(), true, rng_));
  uint32_t last = b.counter();
  for (uint8_t i = 0; i < 5; ++i) {
    auto sig = b.SignChallenge(TransactionOptions{NonceOf(i), "s0", {}}, true);
    ASSERT_TRUE(sig);
    EXPECT_GT(sig->auth_data.counter, last);
    last = sig->auth_data.counter;
    EXPECT_EQ(b.counter(), last);
  }
  EXPECT_EQ(b.signed_records().size(), 6u);
}

TEST_F(DeviceTest, ForeignServerIdIsSignedAsIs) {
  // Without the browser's origin check, B binds whatever id the options
  // carry; the honest server then rejects it.
  crypto::NonceRegistry registry;
  server::RelyingParty server(server::ServerConfig{"s0"}, crypto::Rng(1),
                              registry);
  DeviceB b("alice", "s0");
  DeviceA a("alice", "s0");
  auto opt = server.BeginRegistration("alice");
  auto cred = b.CreateCredential(*opt, true, rng_);
  auto link = server.FinishRegistrationB("alice", cred->first, cred->second);
  auto resp = a.Link(link->value.ToHex(), true, rng_);
  ASSERT_TRUE(server.FinishRegistrationA(resp->link_nonce, resp->public_key,
                                         resp->attestation));
  auto tx = *server.BeginTransaction("alice", "pay 1000 to mallory");
  TransactionOptions phished = tx;
  phished.server_id = "s0-login";
  auto sig = b.SignChallenge(phished, true);
  ASSERT_TRUE(sig);
  EXPECT_EQ(sig->auth_data.server_id, "s0-login");
  auto r = server.FinishTransactionB("alice", tx.challenge, *sig);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kTransactionAborted);
}

TEST_F(DeviceTest, ChallengeReplyMustAnswerOwnRequestFromSameOrigin) {
  DeviceB b("alice", "s0");
  ASSERT_TRUE(b.CreateCredential(RegOptions(), true, rng_));
  const TransactionRequest req{"alice", "pay 10 to bob"};
  const ChallengeReply reply{req, TransactionOptions{NonceOf(3), "s0", {}}};

  auto r = b.HandleChallengeReply("s0", reply, true);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kOriginMismatch);

  b.RecordRequest("s0", req);
  r = b.HandleChallengeReply("s0-login", reply, true);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kOriginMismatch);

  ChallengeReply other = reply;
  other.request.transaction_data = "pay 1000 to mallory";
  EXPECT_FALSE(b.HandleChallengeReply("s0", other, true));

  r = b.HandleChallengeReply("s0", reply, true);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->challenge, NonceOf(3));
  EXPECT_EQ(b.outstanding_requests(), 0u);
  // Consumed: the same reply again is refused.
  EXPECT_FALSE(b.HandleChallengeReply("s0", reply, true));
}

TEST_F(DeviceTest, ChallengeReplyChecksOptionsAgainstOrigin) {
  DeviceB b("alice", "s0");
  ASSERT_TRUE(b.CreateCredential(RegOptions(), true, rng_));
  const TransactionRequest req{"alice", "pay 10 to bob"};
  b.RecordRequest("s0-login", req);
  const ChallengeReply relayed{req, TransactionOptions{NonceOf(4), "s0", {}}};
  auto r = b.HandleChallengeReply("s0-login", relayed, true);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kOriginMismatch);
  EXPECT_EQ(b.outstanding_requests(), 1u);

  ChallengeReply carrying = relayed;
  carrying.options.server_id = "s0-login";
  carrying.options.transaction_data = "pay 10 to bob";
  EXPECT_FALSE(b.HandleChallengeReply("s0-login", carrying, true));
}

TEST_F(DeviceTest, LinkRejectsGarbledCodeAndDecline) {
  DeviceA a("alice", "s0");
  for (const char* bad : {"", "zz", "00", "0123456789abcdef"}) {
    auto r = a.Link(bad, true, rng_);
    ASSERT_FALSE(r) << bad;
    EXPECT_EQ(r.error().code, ErrorCode::kLinkInputError);
  }
  auto r = a.Link(NonceOf(9).ToHex(), false, rng_);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kUserDeclined);
  EXPECT_FALSE(a.has_credential());
}

TEST_F(DeviceTest, LinkAttestsOverNonce) {
  DeviceA a("alice", "s0");
  auto r = a.Link(NonceOf(9).ToHex(), true, rng_);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->link_nonce, NonceOf(9));
  EXPECT_TRUE(crypto::Verify(
      r->public_key,
      *messages::SignedPayload(r->attestation.auth_data, NonceOf(9)),
      r->attestation.signature));
}

class ConfirmTest : public DeviceTest {
 protected:
  void SetUp() override {
    ASSERT_TRUE(a_.Link(NonceOf(9).ToHex(), true, rng_));
  }
  TransactionOptions Options(std::string d) const {
    return TransactionOptions{NonceOf(7), "s0", std::move(d)};
  }
  DeviceA a_{"alice", "s0"};
};

TEST_F(ConfirmTest, CompareSignsMatchingText) {
  UserModel user(UserMode::kCompare);
  user.Initiate("s0", "pay 10 to bob");
  auto r = a_.ConfirmTransaction(Options("pay 10 to bob"), user);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->auth_data.extension_data, "pay 10 to bob");
  EXPECT_TRUE(crypto::Verify(
      *a_.public_key(), *messages::SignedPayload(r->auth_data, NonceOf(7)),
      r->signature));
}

TEST_F(ConfirmTest, CompareDeclinesOtherText) {
  UserModel user(UserMode::kCompare);
  user.Initiate("s0", "pay 10 to bob");
  const uint32_t before = a_.counter();
  auto r = a_.ConfirmTransaction(Options("pay 1000 to mallory"), user);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kUserDeclined);
  EXPECT_EQ(a_.counter(), before);
  ASSERT_EQ(a_.confirmations().size(), 1u);
  EXPECT_FALSE(a_.confirmations()[0].confirmed);
}

TEST_F(ConfirmTest, NoCompareSignsWhateverIsShown) {
  UserModel user(UserMode::kNoCompare);
  user.Initiate("s0", "pay 10 to bob");
  auto r = a_.ConfirmTransaction(Options("pay 1000 to mallory"), user);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->auth_data.extension_data, "pay 1000 to mallory");
}

TEST_F(ConfirmTest, NeedsTextAndOwnServer) {
  UserModel user(UserMode::kNoCompare);
  user.Initiate("s0", "x");
  TransactionOptions no_text{NonceOf(7), "s0", std::nullopt};
  EXPECT_FALSE(a_.ConfirmTransaction(no_text, user));
  TransactionOptions foreign{NonceOf(7), "s1", std::string("x")};
  EXPECT_FALSE(a_.ConfirmTransaction(foreign, user));
}

TEST_F(DeviceTest, CompromiseLeaksKeyAndSharedCounter) {
  DeviceB b("alice", "s0", sink_);
  ASSERT_TRUE(b.CreateCredential(RegOptions(), true, rng_));
  auto leak = b.Compromise();
  EXPECT_TRUE(b.compromised());
  ASSERT_TRUE(leak.key);
  EXPECT_EQ(leak.key->public_key, b.public_key());
  ++*leak.counter;
  EXPECT_EQ(b.counter(), *leak.counter);
  ASSERT_EQ(events_.size(), 1u);
  EXPECT_EQ(events_[0].label, EventLabel::kCompromiseDev1);

  // A leaked key signs anything.
  const messages::AuthenticatorData data{"s0", 99, true, std::nullopt};
  const Bytes payload = *messages::SignedPayload(data, NonceOf(8));
  EXPECT_TRUE(crypto::Verify(*b.public_key(), payload,
                             crypto::Sign(leak.key->secret, payload)));
}

TEST_F(DeviceTest, CompromiseBeforeRegistrationLeaksNoKey) {
  DeviceA a("alice", "s0", sink_);
  auto leak = a.Compromise();
  EXPECT_FALSE(leak.key);
  EXPECT_TRUE(a.compromised());
  ASSERT_EQ(events_.size(), 1u);
  EXPECT_EQ(events_[0].label, EventLabel::kCompromiseDev2);
}

}  // namespace
}  // namespace fido2d::devices
