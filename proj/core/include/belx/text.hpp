#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace belx::text {

/// Decodes UTF-8 into code points. Throws Error(kFormat) on malformed input.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view cps);

bool is_valid_utf8(std::string_view s);

/// True when `offset` is 0, s.size(), or the first byte of a UTF-8 sequence.
bool is_char_boundary(std::string_view s, std::size_t offset);

/// Simple (one-to-one) Unicode lowercase mapping per code point.
std::u32string to_lower(std::u32string_view cps);

/// 64-bit FNV-1a, bit-exact: offset basis 0xcbf29ce484222325, prime 0x100000001b3.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string hex64(std::uint64_t v);

/// Splits on a single-character delimiter, keeping empty fields.
std::vector<std::string_view> split(std::string_view s, char delim);

std::string_view trim(std::string_view s);

}  // namespace belx::text
