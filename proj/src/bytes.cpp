#include "splitscale/bytes.hpp"

namespace splitscale {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::string to_hex(ByteView data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw DecodeError("odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw DecodeError("invalid hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

void ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::var_bytes(ByteView data) {
  u32(static_cast<std::uint32_t>(data.size()));
  raw(data);
}

ByteView ByteReader::raw(std::size_t n) {
  if (n > remaining()) throw DecodeError("truncated input");
  auto view = data_.subspan(pos_, n);
  pos_ += n;
  return view;
}

std::uint8_t ByteReader::u8() { return raw(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto b = raw(2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32() {
  auto b = raw(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = raw(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

Bytes ByteReader::var_bytes(std::size_t max_len) {
  auto len = u32();
  if (len > max_len) throw DecodeError("length field exceeds limit");
  auto view = raw(len);
  return Bytes(view.begin(), view.end());
}

std::uint32_t ByteReader::count(std::size_t min_elem_size) {
  auto n = u32();
  if (min_elem_size > 0 && n > remaining() / min_elem_size) {
    throw DecodeError("element count exceeds input size");
  }
  return n;
}

bool ByteReader::boolean() {
  auto v = u8();
  if (v > 1) throw DecodeError("non-canonical boolean");
  return v == 1;
}

void ByteReader::expect_end() const {
  if (remaining() != 0) throw DecodeError("trailing bytes");
}

}  // namespace splitscale
