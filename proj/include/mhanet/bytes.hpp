#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mhanet/error.hpp"

namespace mhanet {

// Little-endian encoders shared by the EEGR and checkpoint containers.

template <typename U>
U to_little_endian(U value) {
  if constexpr (std::endian::native == std::endian::big) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&value);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return value;
  }
}

class ByteWriter {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_integral_v<U>);
    value = to_little_endian(value);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }

  void put_f32(float value) { put(std::bit_cast<std::uint32_t>(value)); }

  void put_raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_raw(std::span<const std::uint8_t> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader; every failure is a Format error carrying the byte
/// offset and the expected versus available byte counts.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, const char* what)
      : bytes_(bytes), what_(what) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  void need(std::size_t n, const char* field) const {
    if (n > remaining()) {
      fail(ErrorKind::Format, what_, ": truncated reading ", field, " at byte ", offset_,
           ": expected ", n, " bytes, have ", remaining(), " (file is ", bytes_.size(),
           " bytes, needs at least ", offset_ + n, ")");
    }
  }

  template <typename U>
  U get(const char* field) {
    need(sizeof(U), field);
    U value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(U));
    offset_ += sizeof(U);
    return to_little_endian(value);
  }

  float get_f32(const char* field) { return std::bit_cast<float>(get<std::uint32_t>(field)); }

  std::span<const std::uint8_t> get_raw(std::size_t n, const char* field) {
    need(n, field);
    auto out = bytes_.subspan(offset_, n);
    offset_ += n;
    return out;
  }

  std::string get_string(std::size_t n, const char* field) {
    auto raw = get_raw(n, field);
    return std::string(raw.begin(), raw.end());
  }

 private:
  std::span<const std::uint8_t> bytes_;
  const char* what_;
  std::size_t offset_ = 0;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mhanet
