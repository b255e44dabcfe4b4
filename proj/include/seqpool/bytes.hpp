#pragma once

// Little-endian primitive IO. All on-disk formats in this project are
// little-endian regardless of host byte order, so everything goes through
// explicit byte packing instead of raw struct writes.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "seqpool/errors.hpp"

namespace seqpool::bytes {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xffu),
      static_cast<unsigned char>((v >> 8) & 0xffu),
      static_cast<unsigned char>((v >> 16) & 0xffu),
      static_cast<unsigned char>((v >> 24) & 0xffu),
  };
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("unexpected end of file while reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

/// Writes a 4-byte magic tag.
inline void put_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

/// Reads 4 bytes and checks them against the expected tag.
inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char got[4];
  is.read(got, 4);
  if (!is || got[0] != magic[0] || got[1] != magic[1] || got[2] != magic[2] || got[3] != magic[3])
    throw FormatError(std::string("bad magic for ") + what + " (expected " + magic + ")");
}

inline void expect_version(std::istream& is, std::uint32_t expected, const char* what) {
  const std::uint32_t got = get_u32(is);
  if (got != expected)
    throw FormatError(std::string("unsupported ") + what + " version " + std::to_string(got));
}

}  // namespace seqpool::bytes
