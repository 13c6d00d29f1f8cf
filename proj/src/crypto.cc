#include "fido2d/crypto.h"

#include <sodium.h>

#include <cstring>
#include <limits>

namespace fido2d {
namespace {

void EnsureSodium() {
  static const int status = sodium_init();
  if (status < 0) {
    throw crypto::InternalError("libsodium initialisation failed");
  }
}

}  // namespace

Bytes ToBytes(std::string_view text) {
  return Bytes(text.begin(), text.end());
}

std::string ToHex(ByteSpan bytes) {
  std::string out(bytes.size() * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), bytes.data(), bytes.size());
  out.pop_back();
  return out;
}

std::optional<Bytes> FromHex(std::string_view hex) {
  if (hex.size() % 2 != 0) {
    return std::nullopt;
  }
  Bytes out(hex.size() / 2);
  size_t written = 0;
  const char* end = nullptr;
  if (sodium_hex2bin(out.data(), out.size(), hex.data(), hex.size(), nullptr,
                     &written, &end) != 0 ||
      written != out.size() || end != hex.data() + hex.size()) {
    return std::nullopt;
  }
  return out;
}

namespace crypto {

SecretKey::SecretKey(const SecretKey& other) : bytes_(other.bytes_) {}

SecretKey& SecretKey::operator=(const SecretKey& other) {
  bytes_ = other.bytes_;
  return *this;
}

SecretKey::~SecretKey() {
  sodium_memzero(bytes_.data(), bytes_.size());
}

std::string Nonce::ToHex() const {
  return fido2d::ToHex(bytes);
}

std::optional<Nonce> Nonce::FromHex(std::string_view hex) {
  auto raw = fido2d::FromHex(hex);
  if (!raw || raw->size() != kNonceSize) {
    return std::nullopt;
  }
  Nonce nonce;
  std::memcpy(nonce.bytes.data(), raw->data(), kNonceSize);
  return nonce;
}

size_t NonceHash::operator()(const Nonce& nonce) const {
  size_t h;
  std::memcpy(&h, nonce.bytes.data(), sizeof(h));
  return h;
}

Rng::Rng(uint64_t seed) {
  EnsureSodium();
  std::array<uint8_t, 8> raw;
  for (int i = 0; i < 8; ++i) {
    raw[i] = static_cast<uint8_t>(seed >> (56 - 8 * i));
  }
  static constexpr std::string_view kDomain = "fido2d.rng.v1";
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, key_.size());
  crypto_generichash_update(
      &state, reinterpret_cast<const uint8_t*>(kDomain.data()), kDomain.size());
  crypto_generichash_update(&state, raw.data(), raw.size());
  crypto_generichash_final(&state, key_.data(), key_.size());
}

Rng::Rng(const Seed& key) : key_(key) {
  EnsureSodium();
}

Rng Rng::Fork(std::string_view label) const {
  Seed child;
  crypto_generichash(child.data(), child.size(),
                     reinterpret_cast<const uint8_t*>(label.data()),
                     label.size(), key_.data(), key_.size());
  return Rng(child);
}

void Rng::Refill() {
  static constexpr std::array<uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES>
      kStreamNonce{};
  buffer_.fill(0);
  // 32-bit block counter per nonce; 2^32 blocks (256 GiB) per stream is far
  // beyond any run.
  crypto_stream_chacha20_ietf_xor_ic(buffer_.data(), buffer_.data(),
                                     buffer_.size(), kStreamNonce.data(),
                                     static_cast<uint32_t>(block_),
                                     key_.data());
  ++block_;
  if (block_ > std::numeric_limits<uint32_t>::max()) {
    throw InternalError("rng stream exhausted");
  }
  used_ = 0;
}

void Rng::Fill(std::span<uint8_t> out) {
  size_t pos = 0;
  while (pos < out.size()) {
    if (used_ == buffer_.size()) {
      Refill();
    }
    size_t take = std::min(out.size() - pos, buffer_.size() - used_);
    std::memcpy(out.data() + pos, buffer_.data() + used_, take);
    used_ += take;
    pos += take;
  }
}

uint64_t Rng::NextU64() {
  std::array<uint8_t, 8> raw;
  Fill(raw);
  uint64_t v = 0;
  for (uint8_t b : raw) {
    v = (v << 8) | b;
  }
  return v;
}

uint64_t Rng::Uniform(uint64_t bound) {
  if (bound == 0) {
    throw InternalError("Rng::Uniform with empty range");
  }
  // Rejection sampling keeps the draw exactly uniform.
  const uint64_t limit =
      std::numeric_limits<uint64_t>::max() -
      (std::numeric_limits<uint64_t>::max() % bound + 1) % bound;
  uint64_t v;
  do {
    v = NextU64();
  } while (v > limit);
  return v % bound;
}

bool Rng::Chance(uint32_t numerator, uint32_t denominator) {
  return Uniform(denominator) < numerator;
}

Seed Rng::NextSeed() {
  Seed seed;
  Fill(seed);
  return seed;
}

bool NonceRegistry::Register(const Nonce& nonce) {
  return seen_.insert(nonce).second;
}

bool NonceRegistry::Contains(const Nonce& nonce) const {
  return seen_.contains(nonce);
}

Result<KeyPair> Keygen(ByteSpan seed) {
  EnsureSodium();
  if (seed.size() != kSeedSize) {
    return MakeError(ErrorCode::kInvalidInput,
                     "keygen seed must be " + std::to_string(kSeedSize) +
                         " bytes, got " + std::to_string(seed.size()));
  }
  SecretKey secret;
  PublicKey public_key;
  static_assert(sizeof(secret.bytes_) == crypto_sign_SECRETKEYBYTES);
  static_assert(kPublicKeySize == crypto_sign_PUBLICKEYBYTES);
  crypto_sign_seed_keypair(public_key.bytes.data(), secret.bytes_.data(),
                           seed.data());
  return KeyPair{secret, public_key};
}

Signature Sign(const SecretKey& secret, ByteSpan message) {
  Signature sig;
  sig.bytes.resize(crypto_sign_BYTES);
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(),
                       message.size(), secret.bytes_.data());
  return sig;
}

bool Verify(const PublicKey& public_key, ByteSpan message,
            const Signature& signature) {
  EnsureSodium();
  if (signature.bytes.size() != crypto_sign_BYTES) {
    return false;
  }
  return crypto_sign_verify_detached(signature.bytes.data(), message.data(),
                                     message.size(),
                                     public_key.bytes.data()) == 0;
}

Nonce FreshNonce(Rng& rng, NonceRegistry& registry) {
  Nonce nonce;
  rng.Fill(nonce.bytes);
  if (!registry.Register(nonce)) {
    throw InternalError("nonce collision: " + nonce.ToHex());
  }
  return nonce;
}

std::string DigestHex(ByteSpan bytes) {
  std::array<uint8_t, crypto_generichash_BYTES> out{};
  crypto_generichash(out.data(), out.size(), bytes.data(), bytes.size(),
                     nullptr, 0);
  return fido2d::ToHex(out);
}

}  // namespace crypto

}  // namespace fido2d
