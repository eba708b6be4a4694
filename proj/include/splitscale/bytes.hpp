#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace splitscale {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Raised by every decoder on truncated, oversized or non-canonical input.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration value is outside what the protocol supports.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (e.g. applying an unvalidated
/// transaction). Never thrown for bad network input.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A module audit found corrupted state. The CLI maps this to exit code 2.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Little-endian fixed-width writer; variable-length fields carry a u32 length.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(ByteView data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void var_bytes(ByteView data);

  [[nodiscard]] const Bytes& data() const& { return buf_; }
  [[nodiscard]] Bytes take() && { return std::move(buf_); }
  [[nodiscard]] std::size_t size() const { return buf_.size(); }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  ByteView raw(std::size_t n);
  Bytes var_bytes(std::size_t max_len);
  /// Reads a u32 element count and rejects counts that could not possibly fit
  /// in the remaining input at `min_elem_size` bytes each.
  std::uint32_t count(std::size_t min_elem_size);
  bool boolean();

  [[nodiscard]] std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const;

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

}  // namespace splitscale
