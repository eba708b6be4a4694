#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include <boost/multiprecision/cpp_int.hpp>

#include "splitscale/bytes.hpp"

namespace splitscale::crypto {

/// 256-bit digest. Ordering is that of the big-endian unsigned integer, which
/// is plain lexicographic byte order.
struct Digest256 {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest256&) const = default;

  [[nodiscard]] std::string hex() const { return to_hex(bytes); }
  [[nodiscard]] bool is_zero() const;
  /// Bit `i` counted from the most significant bit (bit 0 = MSB of byte 0).
  [[nodiscard]] bool bit(unsigned i) const { return (bytes[i / 8] >> (7 - i % 8)) & 1u; }

  static Digest256 from_hex(std::string_view hex);
  static Digest256 from_view(ByteView view);
  /// All-ones digest; the easiest possible target.
  static Digest256 max();
};

using AddressHash = std::array<std::uint8_t, 20>;
using SubchainId = std::uint32_t;

/// Split depth is bounded so sub-chain ids fit in 16 bits.
inline constexpr unsigned kMaxSplitDepth = 16;

Digest256 double_sha256(ByteView data);

/// Streaming double SHA-256 for inputs produced incrementally (trace logs).
class DoubleSha256Stream {
 public:
  DoubleSha256Stream();
  ~DoubleSha256Stream();
  DoubleSha256Stream(const DoubleSha256Stream&) = delete;
  DoubleSha256Stream& operator=(const DoubleSha256Stream&) = delete;

  void update(ByteView data);
  Digest256 finish();

 private:
  void* ctx_;
};

/// hash_UTXO: double SHA-256 of the canonical scriptPubKey bytes.
inline Digest256 hash_utxo(ByteView script_pubkey) { return double_sha256(script_pubkey); }

/// Top `depth` bits of `h` as an integer in [0, 2^depth). Throws ConfigError
/// when depth exceeds kMaxSplitDepth.
SubchainId assign_subchain(const Digest256& h, unsigned depth);

AddressHash address_of(ByteView public_key);

/// Ed25519 key pair generated deterministically from a 32-byte seed.
class KeyPair {
 public:
  static KeyPair from_seed(ByteView seed);
  /// Seed = double_sha256(label); convenient for named test and scenario keys.
  static KeyPair from_label(std::string_view label);

  [[nodiscard]] ByteView public_key() const { return public_; }
  [[nodiscard]] const AddressHash& address_hash() const { return address_; }
  [[nodiscard]] Bytes sign(const Digest256& message) const;

 private:
  KeyPair() = default;

  std::array<std::uint8_t, 64> secret_{};
  std::array<std::uint8_t, 32> public_{};
  AddressHash address_{};
};

/// False (never a throw) for malformed keys or signatures.
bool verify(ByteView public_key, const Digest256& message, ByteView signature);

// 256-bit integer view of digests, used for targets and chain work.
using U256 = boost::multiprecision::uint256_t;

U256 to_u256(const Digest256& d);
Digest256 from_u256(const U256& v);

/// Expected hashes to meet `target`: floor(2^256 / (target + 1)).
U256 work_for_target(const Digest256& target);

/// Target whose top `zero_bits` bits are zero and the rest one; a header meets
/// it with probability about 2^-zero_bits.
Digest256 target_from_bits(unsigned zero_bits);

}  // namespace splitscale::crypto

template <>
struct std::hash<splitscale::crypto::Digest256> {
  std::size_t operator()(const splitscale::crypto::Digest256& d) const noexcept {
    std::size_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d.bytes[i];
    return v;
  }
};
