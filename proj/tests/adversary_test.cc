#include "fido2d/adversary.h"

#include <algorithm>

#include <gtest/gtest.h>

namespace fido2d::adversary {
namespace {

const Endpoint kServer = Endpoint::Server("s0");
const Endpoint kB = Endpoint::DeviceB("alice");
const Endpoint kA = Endpoint::DeviceA("alice");

TEST(Endpoint, ParseRoundTrip) {
  for (const char* text :
       {"server:s0", "phisher:p0", "b:alice", "a:alice", "adversary"}) {
    auto e = Endpoint::Parse(text);
    ASSERT_TRUE(e) << text;
    EXPECT_EQ(e->ToString(), text);
  }
  EXPECT_FALSE(Endpoint::Parse("server:"));
  EXPECT_FALSE(Endpoint::Parse("client:x"));
  EXPECT_FALSE(Endpoint::Parse("b"));
  EXPECT_TRUE(Endpoint::Parse("phisher:p0")->attacker_owned());
  EXPECT_FALSE(Endpoint::Parse("a:alice")->attacker_owned());
}

TEST(Network, AuthenticOnlyFromServerToDevice) {
  Network net;
  const uint64_t down = net.Send(kServer, kA, {1});
  const uint64_t up = net.Send(kB, kServer, {2});
  EXPECT_TRUE(net.Find(down)->authentic);
  EXPECT_FALSE(net.Find(up)->authentic);
}

TEST(Network, AuthenticMessagesCannotBeModified) {
  Network net;
  const uint64_t id = net.Send(kServer, kA, {1, 2, 3});
  const Bytes patch = {9};
  auto r = net.Modify(id, 0, patch);
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kChannelViolation);
  EXPECT_TRUE(net.in_flight(id));
  EXPECT_EQ(net.Find(id)->bytes, (Bytes{1, 2, 3}));
}

TEST(Network, ServerOriginCannotBeInjected) {
  Network net;
  auto r = net.Inject(kServer, kA, {1});
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().code, ErrorCode::kChannelViolation);
  auto ok = net.Inject(kB, kServer, {1});
  ASSERT_TRUE(ok);
  EXPECT_FALSE(net.Find(*ok)->authentic);
}

TEST(Network, AuthenticMessagesCanBeDroppedAndReplayed) {
  Network net;
  const uint64_t id = net.Send(kServer, kA, {1, 2});
  auto copy = net.Replay(id);
  ASSERT_TRUE(copy);
  const Envelope* e = net.Find(*copy);
  EXPECT_TRUE(e->authentic);
  EXPECT_EQ(e->origin, kServer);
  EXPECT_EQ(e->bytes, (Bytes{1, 2}));
  EXPECT_EQ(e->source, id);
  EXPECT_TRUE(net.Drop(id));
  EXPECT_FALSE(net.in_flight(id));
  EXPECT_FALSE(net.Drop(id));
  EXPECT_TRUE(net.Audit().empty());
}

TEST(Network, ForwardKeepsAuthenticOnlyTowardDevices) {
  Network net;
  const uint64_t id = net.Send(kServer, kA, {5});
  auto to_b = net.Forward(id, kB);
  ASSERT_TRUE(to_b);
  EXPECT_TRUE(net.Find(*to_b)->authentic);
  EXPECT_EQ(net.Find(*to_b)->origin, kServer);
  auto to_server = net.Forward(id, Endpoint::Server("s1"));
  ASSERT_TRUE(to_server);
  EXPECT_FALSE(net.Find(*to_server)->authentic);
  EXPECT_TRUE(net.Audit().empty());
}

TEST(Network, ModifyWithdrawsOriginalAndExtends) {
  Network net;
  const uint64_t id = net.Send(kB, kServer, {1, 2, 3});
  const Bytes patch = {7, 8};
  auto m = net.Modify(id, 2, patch);
  ASSERT_TRUE(m);
  EXPECT_FALSE(net.in_flight(id));
  EXPECT_TRUE(net.in_flight(*m));
  EXPECT_EQ(net.Find(*m)->bytes, (Bytes{1, 2, 7, 8}));
  EXPECT_EQ(net.Find(*m)->provenance, Provenance::kModify);
  // Only in-flight messages can be modified.
  EXPECT_FALSE(net.Modify(id, 0, patch));
}

TEST(Network, NextAndLastTo) {
  Network net;
  const uint64_t a = net.Send(kServer, kB, {1});
  const uint64_t b = net.Send(kServer, kB, {2});
  net.Send(kServer, kA, {3});
  EXPECT_EQ(net.NextTo(kB), a);
  EXPECT_EQ(net.LastTo(kB), b);
  ASSERT_TRUE(net.Take(a));
  EXPECT_EQ(net.NextTo(kB), b);
  EXPECT_FALSE(net.Take(a));
  EXPECT_FALSE(net.NextTo(Endpoint::DeviceB("bob")));
}

TEST(Network, AttackerDestinationsAreNotInFlight) {
  Network net;
  const uint64_t id = net.Send(kB, Endpoint::Phisher("p0"), {1});
  EXPECT_FALSE(net.in_flight(id));
  EXPECT_EQ(net.history().size(), 1u);
}

TEST(Adversary, ObservesEverythingIncludingAuthentic) {
  Network net;
  Adversary adv(crypto::Rng(1));
  net.Send(kServer, kA, {1});
  adv.Observe(net);
  net.Send(kB, kServer, {2});
  adv.Observe(net);
  EXPECT_TRUE(adv.Knows(Bytes{1}));
  EXPECT_TRUE(adv.Knows(Bytes{2}));
  EXPECT_EQ(adv.knowledge_size(), 2u);
}

crypto::Nonce Challenge() {
  crypto::Nonce n;
  n.bytes.fill(0x42);
  return n;
}

TEST(Adversary, ForgeWithoutLeakUsesOwnKey) {
  Adversary adv(crypto::Rng(1));
  auto a = adv.Forge("alice", devices::Role::kB, "s0", std::nullopt,
                     Challenge());
  ASSERT_TRUE(a);
  EXPECT_TRUE(crypto::Verify(
      adv.own_key().public_key,
      *messages::SignedPayload(a->auth_data, Challenge()), a->signature));
}

TEST(Adversary, ForgeWithLeakBumpsSharedCounter) {
  crypto::Rng rng(3);
  devices::DeviceB b("alice", "s0");
  ASSERT_TRUE(b.CreateCredential(
      messages::RegistrationOptions{Challenge(), "s0", "alice"}, true, rng));
  Adversary adv(crypto::Rng(1));
  adv.AddLeak("alice", devices::Role::kB, b.Compromise());
  EXPECT_TRUE(adv.HasKey("alice", devices::Role::kB));
  EXPECT_FALSE(adv.HasKey("alice", devices::Role::kA));
  const uint32_t before = b.counter();
  auto a = adv.Forge("alice", devices::Role::kB, "s0", std::nullopt,
                     Challenge());
  ASSERT_TRUE(a);
  EXPECT_EQ(a->auth_data.counter, before + 1);
  EXPECT_EQ(b.counter(), before + 1);
  EXPECT_TRUE(crypto::Verify(
      *b.public_key(), *messages::SignedPayload(a->auth_data, Challenge()),
      a->signature));
}

class AuditKnowledgeTest : public ::testing::Test {
 protected:
  AuditKnowledgeTest() {
    crypto::Rng rng(4);
    EXPECT_TRUE(b_.CreateCredential(
        messages::RegistrationOptions{Challenge(), "s0", "alice"}, true,
        rng));
  }
  std::vector<HonestKey> Keys(bool leaked) const {
    return {HonestKey{"alice/b", *b_.public_key(), leaked,
                      &b_.signed_records()}};
  }
  Bytes Response(const messages::Assertion& a) const {
    return *messages::Encode(
        messages::AssertionResponse{"alice", Challenge(), a});
  }
  devices::DeviceB b_{"alice", "s0"};
};

TEST_F(AuditKnowledgeTest, HonestSignaturesPass) {
  Adversary adv(crypto::Rng(1));
  auto a = b_.SignChallenge(
      messages::TransactionOptions{Challenge(), "s0", std::nullopt}, true);
  adv.Learn(Response(*a));
  EXPECT_TRUE(AuditKnowledge(adv, Keys(false)).empty());
}

TEST_F(AuditKnowledgeTest, ForgeryUnderUnleakedKeyIsFlagged) {
  Adversary adv(crypto::Rng(1));
  auto leak = b_.Compromise();
  adv.AddLeak("alice", devices::Role::kB, leak);
  auto forged = adv.Forge("alice", devices::Role::kB, "s0", std::nullopt,
                          Challenge());
  adv.Learn(Response(*forged));
  EXPECT_TRUE(AuditKnowledge(adv, Keys(true)).empty());
  // Same knowledge, but the audit is told the key never leaked.
  EXPECT_FALSE(AuditKnowledge(adv, Keys(false)).empty());
}

TEST_F(AuditKnowledgeTest, ReboundHonestSignatureIsFlagged) {
  // A signature the device made, presented over a payload it never signed,
  // that still verifies: impossible without breaking the scheme, so the
  // audit must notice if it ever happens.
  Adversary adv(crypto::Rng(1));
  auto leak = b_.Compromise();
  messages::AuthenticatorData data{"s0", 77, true, std::nullopt};
  crypto::Nonce other = Challenge();
  other.bytes[0] = 0;
  const auto sig =
      crypto::Sign(leak.key->secret, *messages::SignedPayload(data, other));
  adv.Learn(*messages::Encode(messages::AssertionResponse{
      "alice", other, messages::Assertion{data, sig}}));
  EXPECT_FALSE(AuditKnowledge(adv, Keys(false)).empty());
}

}  // namespace
}  // namespace fido2d::adversary
