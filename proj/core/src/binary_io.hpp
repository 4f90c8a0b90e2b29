#pragma once

// Little-endian primitive I/O shared by the binary artifact formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "belx/error.hpp"

namespace belx::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, std::string_view what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (in.gcount() != static_cast<std::streamsize>(sizeof v)) {
    throw Error(ErrorKind::kFormat, "truncated file while reading " + std::string(what));
  }
  return v;
}

inline void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (got != magic) {
    throw Error(ErrorKind::kFormat, "bad magic: expected " + std::string(magic));
  }
}

inline std::string get_bytes(std::istream& in, std::size_t n, std::string_view what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw Error(ErrorKind::kFormat, "truncated file while reading " + std::string(what));
  }
  return s;
}

}  // namespace belx::binary
