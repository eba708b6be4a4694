#include "splitscale/crypto.hpp"

#include <algorithm>
#include <mutex>

#include <openssl/evp.h>
#include <sodium.h>

namespace splitscale::crypto {

namespace {

void ensure_sodium() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
  });
}

std::array<std::uint8_t, 32> sha256(ByteView data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("EVP_Digest failed");
  }
  return out;
}

}  // namespace

bool Digest256::is_zero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](auto b) { return b == 0; });
}

Digest256 Digest256::from_hex(std::string_view hex) {
  auto raw = splitscale::from_hex(hex);
  return from_view(raw);
}

Digest256 Digest256::from_view(ByteView view) {
  if (view.size() != 32) throw DecodeError("digest must be 32 bytes");
  Digest256 d;
  std::copy(view.begin(), view.end(), d.bytes.begin());
  return d;
}

Digest256 Digest256::max() {
  Digest256 d;
  d.bytes.fill(0xff);
  return d;
}

Digest256 double_sha256(ByteView data) {
  auto first = sha256(data);
  Digest256 out;
  out.bytes = sha256(first);
  return out;
}

DoubleSha256Stream::DoubleSha256Stream() : ctx_(EVP_MD_CTX_new()) {
  if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("EVP_DigestInit_ex failed");
  }
}

DoubleSha256Stream::~DoubleSha256Stream() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void DoubleSha256Stream::update(ByteView data) {
  EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
}

Digest256 DoubleSha256Stream::finish() {
  std::array<std::uint8_t, 32> first{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), first.data(), &len);
  Digest256 out;
  out.bytes = sha256(first);
  return out;
}

SubchainId assign_subchain(const Digest256& h, unsigned depth) {
  if (depth > kMaxSplitDepth) {
    throw ConfigError("split depth " + std::to_string(depth) + " exceeds maximum of " +
                      std::to_string(kMaxSplitDepth));
  }
  if (depth == 0) return 0;
  std::uint32_t top = (std::uint32_t{h.bytes[0]} << 16) | (std::uint32_t{h.bytes[1]} << 8) | h.bytes[2];
  return top >> (24 - depth);
}

AddressHash address_of(ByteView public_key) {
  auto d = double_sha256(public_key);
  AddressHash a{};
  std::copy_n(d.bytes.begin(), a.size(), a.begin());
  return a;
}

KeyPair KeyPair::from_seed(ByteView seed) {
  if (seed.size() != crypto_sign_SEEDBYTES) throw ConfigError("key seed must be 32 bytes");
  ensure_sodium();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.public_.data(), kp.secret_.data(), seed.data());
  kp.address_ = address_of(kp.public_);
  return kp;
}

KeyPair KeyPair::from_label(std::string_view label) {
  auto seed = double_sha256(as_bytes(label));
  return from_seed(seed.bytes);
}

Bytes KeyPair::sign(const Digest256& message) const {
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.bytes.data(), message.bytes.size(), secret_.data());
  return sig;
}

bool verify(ByteView public_key, const Digest256& message, ByteView signature) {
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) {
    return false;
  }
  ensure_sodium();
  return crypto_sign_verify_detached(signature.data(), message.bytes.data(), message.bytes.size(),
                                     public_key.data()) == 0;
}

U256 to_u256(const Digest256& d) {
  U256 v;
  boost::multiprecision::import_bits(v, d.bytes.begin(), d.bytes.end(), 8, true);
  return v;
}

Digest256 from_u256(const U256& v) {
  Digest256 d;
  std::array<std::uint8_t, 32> tmp{};
  auto end = boost::multiprecision::export_bits(v, tmp.begin(), 8, true);
  auto n = static_cast<std::size_t>(end - tmp.begin());
  // export_bits writes the minimal big-endian representation; right-align it.
  std::copy_n(tmp.begin(), n, d.bytes.begin() + (32 - n));
  return d;
}

U256 work_for_target(const Digest256& target) {
  // 2^256 / (t+1) == (~t / (t+1)) + 1 without needing a 257-bit type.
  U256 t = to_u256(target);
  U256 not_t = ~t;
  if (not_t == 0) return 1;
  return not_t / (t + 1) + 1;
}

Digest256 target_from_bits(unsigned zero_bits) {
  if (zero_bits >= 256) return Digest256{};
  U256 all = ~U256(0);
  return from_u256(all >> zero_bits);
}

}  // namespace splitscale::crypto
