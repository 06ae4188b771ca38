#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cactus/error.hpp"

namespace cactus {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

template<size_t N>
using ByteArray = std::array<uint8_t, N>;

/// Overwrites memory in a way the optimizer may not elide.
void secure_zero(void* data, size_t size) noexcept;

inline void secure_zero(Bytes& bytes) noexcept
{
  secure_zero(bytes.data(), bytes.size());
  bytes.clear();
}

inline ByteView as_view(std::string_view s)
{
  return { reinterpret_cast<const uint8_t*>(s.data()), s.size() };
}

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

bool constant_time_equal(ByteView a, ByteView b) noexcept;

/// Fixed 32-byte secret. Wiped on destruction and on move-from.
class SecretKey
{
public:
  static constexpr size_t size = 32;

  SecretKey() = default;
  explicit SecretKey(ByteView bytes);
  explicit SecretKey(const ByteArray<size>& bytes)
    : bytes_(bytes)
  {
  }

  SecretKey(const SecretKey&) = default;
  SecretKey& operator=(const SecretKey&) = default;
  SecretKey(SecretKey&& other) noexcept
    : bytes_(other.bytes_)
  {
    other.wipe();
  }
  SecretKey& operator=(SecretKey&& other) noexcept
  {
    if (this != &other) {
      bytes_ = other.bytes_;
      other.wipe();
    }
    return *this;
  }
  ~SecretKey() { wipe(); }

  void wipe() noexcept { secure_zero(bytes_.data(), bytes_.size()); }

  ByteView view() const { return bytes_; }
  const ByteArray<size>& array() const { return bytes_; }
  ByteArray<size>& mutable_array() { return bytes_; }

  friend bool operator==(const SecretKey& a, const SecretKey& b)
  {
    return constant_time_equal(a.bytes_, b.bytes_);
  }

private:
  ByteArray<size> bytes_{};
};

/// Big-endian writer for the length-prefixed wire formats.
class Writer
{
public:
  Writer& u8(uint8_t v)
  {
    out_.push_back(v);
    return *this;
  }
  Writer& u16(uint16_t v) { return be(v, 2); }
  Writer& u32(uint32_t v) { return be(v, 4); }
  Writer& u64(uint64_t v) { return be(v, 8); }
  Writer& raw(ByteView data)
  {
    out_.insert(out_.end(), data.begin(), data.end());
    return *this;
  }
  Writer& raw(std::string_view s) { return raw(as_view(s)); }
  Writer& bytes16(ByteView data);
  Writer& bytes32(ByteView data);

  const Bytes& data() const { return out_; }
  Bytes take() { return std::move(out_); }

private:
  Writer& be(uint64_t v, int width)
  {
    for (int i = width - 1; i >= 0; --i)
      out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    return *this;
  }

  Bytes out_;
};

/// Bounds-checked big-endian reader. Every short read throws Malformed.
class Reader
{
public:
  explicit Reader(ByteView data)
    : data_(data)
  {
  }

  uint8_t u8() { return static_cast<uint8_t>(be(1)); }
  uint16_t u16() { return static_cast<uint16_t>(be(2)); }
  uint32_t u32() { return static_cast<uint32_t>(be(4)); }
  uint64_t u64() { return be(8); }
  ByteView raw(size_t n);
  Bytes raw_copy(size_t n)
  {
    auto v = raw(n);
    return { v.begin(), v.end() };
  }
  template<size_t N>
  ByteArray<N> array()
  {
    ByteArray<N> out{};
    auto v = raw(N);
    std::copy(v.begin(), v.end(), out.begin());
    return out;
  }
  Bytes bytes16() { return raw_copy(u16()); }
  Bytes bytes32() { return raw_copy(u32()); }
  void expect_magic(std::string_view magic);

  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return remaining() == 0; }
  void expect_done() const;

private:
  uint64_t be(size_t width);

  ByteView data_;
  size_t pos_ = 0;
};

} // namespace cactus
