#pragma once

// Little-endian stream helpers shared by the on-disk formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamadapt::detail {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; add byte swapping for this target");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("unexpected end of file");
  return v;
}

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("unexpected end of file");
}

inline void put_magic(std::ostream& os, const char (&magic)[5]) { put_bytes(os, magic, 4); }

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
  char buf[4];
  get_bytes(is, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0) throw std::runtime_error(what + ": bad magic");
}

inline void put_floats(std::ostream& os, std::span<const float> v) {
  put_bytes(os, v.data(), v.size() * sizeof(float));
}

inline std::vector<float> get_floats(std::istream& is, std::size_t n) {
  std::vector<float> v(n);
  get_bytes(is, v.data(), n * sizeof(float));
  return v;
}

template <class T>
T checked_narrow(std::size_t v, const std::string& what) {
  if (v > static_cast<std::size_t>(std::numeric_limits<T>::max()))
    throw std::invalid_argument(what + " does not fit the on-disk field");
  return static_cast<T>(v);
}

}  // namespace streamadapt::detail
