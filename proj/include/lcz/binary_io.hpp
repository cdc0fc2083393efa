#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lcz/errors.hpp"

// Little-endian primitives for the binary container/checkpoint formats.

namespace lcz::bio {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }

inline void put_u16(std::ostream& os, std::uint16_t v) {
  const std::uint8_t b[2] = {std::uint8_t(v & 0xff), std::uint8_t(v >> 8)};
  put_bytes(os, b, 2);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::uint8_t b[4] = {std::uint8_t(v & 0xff), std::uint8_t((v >> 8) & 0xff),
                             std::uint8_t((v >> 16) & 0xff), std::uint8_t(v >> 24)};
  put_bytes(os, b, 4);
}

inline void put_f32(std::ostream& os, float v) {
  put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::ostream& os, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  put_u32(os, static_cast<std::uint32_t>(u & 0xffffffffULL));
  put_u32(os, static_cast<std::uint32_t>(u >> 32));
}

inline void put_f32_array(std::ostream& os, std::span<const float> v) {
  if constexpr (std::endian::native == std::endian::little) {
    put_bytes(os, v.data(), v.size() * sizeof(float));
  } else {
    for (float x : v) put_f32(os, x);
  }
}

inline void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw data_error(std::string("truncated file while reading ") + what);
  }
}

inline std::uint8_t get_u8(std::istream& is, const char* what) {
  std::uint8_t v = 0;
  get_bytes(is, &v, 1, what);
  return v;
}

inline std::uint16_t get_u16(std::istream& is, const char* what) {
  std::uint8_t b[2];
  get_bytes(is, b, 2, what);
  return std::uint16_t(b[0] | (std::uint16_t(b[1]) << 8));
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::uint8_t b[4];
  get_bytes(is, b, 4, what);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline float get_f32(std::istream& is, const char* what) {
  return std::bit_cast<float>(get_u32(is, what));
}

inline double get_f64(std::istream& is, const char* what) {
  const std::uint64_t lo = get_u32(is, what);
  const std::uint64_t hi = get_u32(is, what);
  return std::bit_cast<double>(lo | (hi << 32));
}

inline void get_f32_array(std::istream& is, std::span<float> v, const char* what) {
  if constexpr (std::endian::native == std::endian::little) {
    get_bytes(is, v.data(), v.size() * sizeof(float), what);
  } else {
    for (float& x : v) x = get_f32(is, what);
  }
}

}  // namespace lcz::bio
