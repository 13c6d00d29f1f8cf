#ifndef FIDO2D_CRYPTO_H_
#define FIDO2D_CRYPTO_H_

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fido2d/result.h"

namespace fido2d {

using Bytes = std::vector<uint8_t>;
using ByteSpan = std::span<const uint8_t>;

Bytes ToBytes(std::string_view text);
std::string ToHex(ByteSpan bytes);
std::optional<Bytes> FromHex(std::string_view hex);

namespace crypto {

// Ed25519 through libsodium. Recorded in run metadata.
inline constexpr std::string_view kSignatureAlgorithm = "Ed25519";

inline constexpr size_t kSeedSize = 32;
inline constexpr size_t kNonceSize = 32;
inline constexpr size_t kPublicKeySize = 32;
inline constexpr size_t kSignatureSize = 64;

using Seed = std::array<uint8_t, kSeedSize>;

struct PublicKey {
  std::array<uint8_t, kPublicKeySize> bytes{};

  auto operator<=>(const PublicKey&) const = default;
};

class SecretKey;
struct KeyPair;
struct Signature;

Result<KeyPair> Keygen(ByteSpan seed);
Signature Sign(const SecretKey& secret, ByteSpan message);

// Signing key material. Only Sign() reads the bytes.
class SecretKey {
 public:
  SecretKey(const SecretKey& other);
  SecretKey& operator=(const SecretKey& other);
  ~SecretKey();

 private:
  friend Result<KeyPair> Keygen(ByteSpan seed);
  friend Signature Sign(const SecretKey& secret, ByteSpan message);
  SecretKey() = default;

  std::array<uint8_t, 64> bytes_{};
};

struct Signature {
  Bytes bytes;

  bool operator==(const Signature&) const = default;
};

struct KeyPair {
  SecretKey secret;
  PublicKey public_key;
};

struct Nonce {
  std::array<uint8_t, kNonceSize> bytes{};

  auto operator<=>(const Nonce&) const = default;
  std::string ToHex() const;
  static std::optional<Nonce> FromHex(std::string_view hex);
};

struct NonceHash {
  size_t operator()(const Nonce& nonce) const;
};

// Deterministic byte source: a ChaCha20 keystream keyed from a seed. Not
// copyable; derive independent streams with Fork().
class Rng {
 public:
  explicit Rng(uint64_t seed);
  explicit Rng(const Seed& key);
  Rng(Rng&&) = default;
  Rng& operator=(Rng&&) = default;
  Rng(const Rng&) = delete;
  Rng& operator=(const Rng&) = delete;

  // Child stream keyed by (this key, label); independent of how much of
  // this stream has been consumed.
  Rng Fork(std::string_view label) const;

  void Fill(std::span<uint8_t> out);
  uint64_t NextU64();
  // Uniform in [0, bound). bound must be > 0.
  uint64_t Uniform(uint64_t bound);
  bool Chance(uint32_t numerator, uint32_t denominator);
  Seed NextSeed();

 private:
  void Refill();

  Seed key_{};
  uint64_t block_ = 0;
  std::array<uint8_t, 64> buffer_{};
  size_t used_ = 64;
};

// Every nonce drawn during a run is registered here; a repeat means the
// random source discipline is broken.
class NonceRegistry {
 public:
  bool Register(const Nonce& nonce);
  bool Contains(const Nonce& nonce) const;
  size_t size() const { return seen_.size(); }

 private:
  std::unordered_set<Nonce, NonceHash> seen_;
};

// Thrown when a run's invariants are broken beyond recovery (e.g. a nonce
// collision); the run must abort.
class InternalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool Verify(const PublicKey& public_key, ByteSpan message,
            const Signature& signature);
Nonce FreshNonce(Rng& rng, NonceRegistry& registry);

// BLAKE2b-256, hex encoded. Used to fingerprint logs.
std::string DigestHex(ByteSpan bytes);

}  // namespace crypto
}  // namespace fido2d

#endif  // FIDO2D_CRYPTO_H_
