#include "fido2d/messages.h"

#include <gtest/gtest.h>

namespace fido2d::messages {
namespace {

using crypto::Rng;

// Small pools so independently drawn messages often collide in some fields
// but not others; split points ("ab"+"c" vs "a"+"bc") probe the length
// prefixes.
const std::vector<std::string> kNames = {"a", "ab", "c", "bc", "alice",
                                         "ünï", "日本"};
const std::vector<std::string> kTexts = {"", "a", "pay 10 to bob", "ab", "c",
                                         "pay 1000 to mallory", "€"};

std::string Pick(Rng& rng, const std::vector<std::string>& pool) {
  return pool[rng.Uniform(pool.size())];
}

crypto::Nonce RandomNonce(Rng& rng) {
  crypto::Nonce n;
  // Mostly one of two values, to make equal nonces common.
  if (rng.Chance(1, 2)) {
    n.bytes.fill(static_cast<uint8_t>(rng.Uniform(2)));
  } else {
    rng.Fill(n.bytes);
  }
  return n;
}

crypto::PublicKey RandomKey(Rng& rng) {
  crypto::PublicKey k;
  k.bytes.fill(static_cast<uint8_t>(rng.Uniform(3)));
  return k;
}

std::optional<std::string> MaybeText(Rng& rng) {
  if (rng.Chance(1, 3)) return std::nullopt;
  return Pick(rng, kTexts);
}

AuthenticatorData RandomAuthData(Rng& rng) {
  return AuthenticatorData{Pick(rng, kNames),
                           static_cast<uint32_t>(rng.Uniform(3)),
                           rng.Chance(1, 2), MaybeText(rng)};
}

Assertion RandomAssertion(Rng& rng) {
  crypto::Signature sig;
  sig.bytes.resize(rng.Uniform(2) ? 64 : rng.Uniform(4));
  for (auto& b : sig.bytes) b = static_cast<uint8_t>(rng.Uniform(2));
  return Assertion{RandomAuthData(rng), sig};
}

Message RandomMessage(Rng& rng, size_t kind) {
  switch (kind) {
    case 0:
      return RegistrationRequest{Pick(rng, kNames)};
    case 1:
      return RegistrationOptions{RandomNonce(rng), Pick(rng, kNames),
                                 Pick(rng, kNames)};
    case 2:
      return RegistrationResponse{Pick(rng, kNames), RandomKey(rng),
                                  RandomAssertion(rng)};
    case 3:
      return LinkNonce{RandomNonce(rng), Pick(rng, kNames)};
    case 4:
      return LinkResponse{RandomNonce(rng), RandomKey(rng),
                          RandomAssertion(rng)};
    case 5:
      return AccountActive{Pick(rng, kNames)};
    case 6:
      return TransactionRequest{Pick(rng, kNames), Pick(rng, kTexts)};
    case 7:
      return TransactionOptions{RandomNonce(rng), Pick(rng, kNames),
                                MaybeText(rng)};
    case 8:
      return ChallengeReply{
          TransactionRequest{Pick(rng, kNames), Pick(rng, kTexts)},
          TransactionOptions{RandomNonce(rng), Pick(rng, kNames),
                             MaybeText(rng)}};
    case 9:
      return AssertionResponse{Pick(rng, kNames), RandomNonce(rng),
                               RandomAssertion(rng)};
    case 10:
      return TransactionResult{Pick(rng, kNames), Pick(rng, kTexts),
                               rng.Chance(1, 2)};
    case 11:
      return StatusReply{rng.Chance(1, 2), Pick(rng, kTexts)};
    case 12:
      return RandomAuthData(rng);
    default:
      return RandomAssertion(rng);
  }
}

constexpr size_t kKinds = std::variant_size_v<Message>;

Message RandomMessage(Rng& rng) {
  return RandomMessage(rng, rng.Uniform(kKinds));
}

TEST(Encode, RoundTripOverRandomMessages) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const Message m = RandomMessage(rng);
    auto bytes = Encode(m);
    ASSERT_TRUE(bytes) << MessageName(m) << ": " << bytes.error().ToString();
    auto back = Decode(*bytes);
    ASSERT_TRUE(back) << back.error().ToString();
    EXPECT_EQ(*back, m);
    EXPECT_EQ(*Encode(m), *bytes);
  }
}

TEST(Encode, EveryKindRoundTrips) {
  Rng rng(2);
  for (size_t k = 0; k < kKinds; ++k) {
    const Message m = RandomMessage(rng, k);
    EXPECT_EQ(m.index(), k);
    EXPECT_EQ(*Decode(*Encode(m)), m);
  }
}

// Equal encodings exactly when the messages are equal.
TEST(Encode, InjectiveOverNearCollisions) {
  Rng rng(3);
  size_t equal_pairs = 0;
  for (int i = 0; i < 20000; ++i) {
    const size_t kind = rng.Uniform(kKinds);
    const Message a = RandomMessage(rng, kind);
    const Message b = RandomMessage(rng, kind);
    const bool same = a == b;
    equal_pairs += same;
    EXPECT_EQ(*Encode(a) == *Encode(b), same)
        << MessageName(a) << " vs " << MessageName(b);
  }
  EXPECT_GT(equal_pairs, 0u);
}

TEST(Encode, SingleFieldMutationChangesBytes) {
  const TransactionOptions base{crypto::Nonce{}, "s0", "pay 10 to bob"};
  std::vector<TransactionOptions> mutants(5, base);
  mutants[0].challenge.bytes[31] = 1;
  mutants[1].server_id = "s1";
  mutants[2].transaction_data = "pay 10 to bobs";
  mutants[3].transaction_data = std::nullopt;
  mutants[4].transaction_data = "";
  const Bytes b = *Encode(base);
  for (const auto& m : mutants) EXPECT_NE(*Encode(m), b);
  // Field boundaries cannot shift.
  EXPECT_NE(*Encode(TransactionRequest{"ab", "c"}),
            *Encode(TransactionRequest{"a", "bc"}));
}

TEST(Encode, RefusesInvariantViolations) {
  EXPECT_FALSE(Encode(RegistrationRequest{""}));
  EXPECT_FALSE(Encode(RegistrationOptions{{}, "", "alice"}));
  EXPECT_FALSE(Encode(TransactionRequest{"alice", "\xff\xfe"}));
  EXPECT_FALSE(Encode(AccountActive{"\xc3"}));
}

TEST(Decode, EmptyIsMalformed) {
  auto r = Decode({});
  ASSERT_FALSE(r);
  EXPECT_EQ(r.error().offset, 0u);
}

TEST(Decode, TagFlipNeverYieldsOriginal) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const Message m = RandomMessage(rng);
    Bytes bytes = *Encode(m);
    const uint8_t tag = bytes[0];
    for (int t = 0; t < 256; ++t) {
      if (t == tag) continue;
      bytes[0] = static_cast<uint8_t>(t);
      auto r = Decode(bytes);
      if (r) EXPECT_NE(*r, m);
    }
  }
}

TEST(Decode, TruncationAndTrailingBytesRejected) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Bytes bytes = *Encode(RandomMessage(rng));
    for (size_t n = 0; n < bytes.size(); ++n) {
      EXPECT_FALSE(Decode(ByteSpan(bytes.data(), n))) << n;
    }
    Bytes longer = bytes;
    longer.push_back(0);
    auto r = Decode(longer);
    ASSERT_FALSE(r);
    EXPECT_EQ(r.error().offset, bytes.size());
  }
}

TEST(Decode, RandomBytesNeverCrash) {
  Rng rng(6);
  size_t accepted = 0;
  for (int i = 0; i < 20000; ++i) {
    Bytes junk(rng.Uniform(80));
    rng.Fill(junk);
    if (!junk.empty()) junk[0] = static_cast<uint8_t>(1 + rng.Uniform(12));
    auto r = Decode(junk);
    if (r) {
      // Whatever decodes must be in the image of Encode.
      EXPECT_EQ(*Encode(*r), junk);
      ++accepted;
    }
  }
  SUCCEED() << accepted << " accepted";
}

TEST(Decode, RejectsBadUtf8AndBadFlags) {
  Bytes bytes = *Encode(TransactionRequest{"alice", "ab"});
  Bytes bad = bytes;
  bad[bad.size() - 1] = 0xff;
  EXPECT_FALSE(Decode(bad));

  Bytes flag = *Encode(StatusReply{true, ""});
  flag[1] = 2;
  EXPECT_FALSE(Decode(flag));

  Bytes presence = *Encode(TransactionOptions{{}, "s0", std::nullopt});
  presence.back() = 2;
  EXPECT_FALSE(Decode(presence));
}

TEST(SignedPayload, BindsTransactionText) {
  crypto::Rng rng(7);
  auto key = crypto::Keygen(rng.NextSeed());
  const crypto::Nonce ch = RandomNonce(rng);
  const AuthenticatorData data{"s0", 2, true, "pay 10 to bob"};
  const auto sig = crypto::Sign(key->secret, *SignedPayload(data, ch));
  ASSERT_TRUE(crypto::Verify(key->public_key, *SignedPayload(data, ch), sig));

  AuthenticatorData other = data;
  other.extension_data = "pay 1000 to mallory";
  EXPECT_FALSE(crypto::Verify(key->public_key, *SignedPayload(other, ch), sig));
  other = data;
  other.server_id = "s0-login";
  EXPECT_FALSE(crypto::Verify(key->public_key, *SignedPayload(other, ch), sig));
  crypto::Nonce ch2 = ch;
  ch2.bytes[0] ^= 1;
  EXPECT_FALSE(crypto::Verify(key->public_key, *SignedPayload(data, ch2), sig));
}

TEST(SignedPayload, IsEncodingThenChallenge) {
  const AuthenticatorData data{"s0", 1, true, std::nullopt};
  crypto::Nonce ch;
  ch.bytes.fill(0xab);
  Bytes expected = *Encode(data);
  expected.insert(expected.end(), ch.bytes.begin(), ch.bytes.end());
  EXPECT_EQ(*SignedPayload(data, ch), expected);
}

// Hand-assembled bytes for one message, following the documented layout.
TEST(Encode, MatchesDocumentedLayout) {
  const Bytes expected = {0x07,                    // TransactionRequest
                          0, 0, 0, 1, 'a',         // username
                          0, 0, 0, 2, 'h', 'i'};   // transaction_data
  EXPECT_EQ(*Encode(TransactionRequest{"a", "hi"}), expected);

  const Bytes status = {0x0c, 1, 0, 0, 0, 0};
  EXPECT_EQ(*Encode(StatusReply{true, ""}), status);
}

}  // namespace
}  // namespace fido2d::messages
