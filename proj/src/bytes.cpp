#include "cactus/bytes.hpp"

#include <openssl/crypto.h>

namespace cactus {

void secure_zero(void* data, size_t size) noexcept
{
  if (data != nullptr && size > 0)
    OPENSSL_cleanse(data, size);
}

std::string to_hex(ByteView bytes)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

namespace {

int hex_value(char c)
{
  if (c >= '0' && c <= '9')
    return c - '0';
  if (c >= 'a' && c <= 'f')
    return c - 'a' + 10;
  if (c >= 'A' && c <= 'F')
    return c - 'A' + 10;
  return -1;
}

} // namespace

Bytes from_hex(std::string_view hex)
{
  if (hex.size() % 2 != 0)
    throw Error(ErrorCode::Malformed, "odd-length hex string");
  Bytes out(hex.size() / 2);
  for (size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0)
      throw Error(ErrorCode::Malformed, "invalid hex digit");
    out[i] = static_cast<uint8_t>((hi << 4) | lo);
  }
  return out;
}

bool constant_time_equal(ByteView a, ByteView b) noexcept
{
  if (a.size() != b.size())
    return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

SecretKey::SecretKey(ByteView bytes)
{
  if (bytes.size() != size)
    throw Error(ErrorCode::InvalidArgument, "secret key must be 32 bytes");
  std::copy(bytes.begin(), bytes.end(), bytes_.begin());
}

Writer& Writer::bytes16(ByteView data)
{
  if (data.size() > 0xffff)
    throw Error(ErrorCode::InvalidArgument, "field too long for u16 length prefix");
  u16(static_cast<uint16_t>(data.size()));
  return raw(data);
}

Writer& Writer::bytes32(ByteView data)
{
  if (data.size() > 0xffffffffULL)
    throw Error(ErrorCode::InvalidArgument, "field too long for u32 length prefix");
  u32(static_cast<uint32_t>(data.size()));
  return raw(data);
}

ByteView Reader::raw(size_t n)
{
  if (n > remaining())
    throw Error(ErrorCode::Malformed, "truncated input");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void Reader::expect_magic(std::string_view magic)
{
  auto got = raw(magic.size());
  if (!std::equal(got.begin(), got.end(), magic.begin(), magic.end(),
                  [](uint8_t a, char b) { return a == static_cast<uint8_t>(b); }))
    throw Error(ErrorCode::Malformed, "bad magic, expected " + std::string(magic));
}

void Reader::expect_done() const
{
  if (!done())
    throw Error(ErrorCode::Malformed, "trailing bytes");
}

uint64_t Reader::be(size_t width)
{
  auto v = raw(width);
  uint64_t out = 0;
  for (auto b : v)
    out = (out << 8) | b;
  return out;
}

} // namespace cactus
