#pragma once

// Little-endian 64-bit readers/writers shared by every checkpoint format.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "samwalker/error.hpp"

namespace samwalker::io {

namespace detail {
inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int k = 0; k < 8; ++k) r |= ((v >> (8 * k)) & 0xffu) << (8 * (7 - k));
    return r;
  }
}
}  // namespace detail

inline void put_u64(std::ostream& out, std::uint64_t v) {
  v = detail::to_le(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

inline void put_f64s(std::ostream& out, std::span<const double> xs) {
  for (double d : xs) put_f64(out, d);
}

inline std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("truncated checkpoint");
  return detail::to_le(v);
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline std::vector<double> get_f64s(std::istream& in, std::size_t count) {
  std::vector<double> out(count);
  for (auto& d : out) d = get_f64(in);
  return out;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  std::uint64_t len = get_u64(in);
  if (len > (1u << 26)) throw Error("corrupt checkpoint string");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated checkpoint");
  return s;
}

}  // namespace samwalker::io
