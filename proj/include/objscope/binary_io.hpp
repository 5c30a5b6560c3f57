#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "objscope/error.hpp"

// Little-endian primitives shared by every binary artifact.
namespace objscope::le {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
  requires std::is_integral_v<T>
inline void put(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  std::array<char, sizeof(T)> buf{};
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    buf[b] = static_cast<char>((u >> (8 * b)) & 0xFFu);
  }
  out.write(buf.data(), buf.size());
}

inline void put_f32(std::ostream& out, float value) { put(out, std::bit_cast<std::uint32_t>(value)); }
inline void put_f64(std::ostream& out, double value) { put(out, std::bit_cast<std::uint64_t>(value)); }

inline void put_bytes(std::ostream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

// Reads exactly n bytes. Returns the count actually read so callers can tell
// a clean end-of-stream (0) from a short read.
inline std::size_t read_some(std::istream& in, void* data, std::size_t n) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in.gcount());
}

inline void get_bytes(std::istream& in, void* data, std::size_t n, const char* what) {
  if (read_some(in, data, n) != n) {
    throw TruncatedError(std::string("truncated input while reading ") + what);
  }
}

template <typename T>
  requires std::is_integral_v<T>
inline T get(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> buf{};
  get_bytes(in, buf.data(), buf.size(), what);
  std::make_unsigned_t<T> u = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    u |= static_cast<std::make_unsigned_t<T>>(buf[b]) << (8 * b);
  }
  return static_cast<T>(u);
}

inline float get_f32(std::istream& in, const char* what) {
  return std::bit_cast<float>(get<std::uint32_t>(in, what));
}
inline double get_f64(std::istream& in, const char* what) {
  return std::bit_cast<double>(get<std::uint64_t>(in, what));
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
  char buf[4] = {};
  if (read_some(in, buf, 4) != 4 || std::memcmp(buf, magic, 4) != 0) {
    throw BadMagicError(std::string("bad magic in ") + what + ", expected \"" + magic + "\"");
  }
}

inline void expect_version(std::istream& in, std::uint16_t expected, const char* what) {
  const auto v = get<std::uint16_t>(in, what);
  if (v != expected) {
    throw VersionError(std::string(what) + " version " + std::to_string(v) + " is not supported (expected " +
                       std::to_string(expected) + ")");
  }
}

inline void check_stream(const std::ostream& out, const char* what) {
  if (!out) throw IoError(std::string("write failed: ") + what);
}

}  // namespace objscope::le
