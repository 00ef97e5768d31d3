#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tabdpo::util {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower_ascii(std::string_view s);

// Decodes UTF-8 into code points. Input must already be valid.
std::vector<char32_t> utf8_decode(std::string_view s);
void utf8_append(std::string& out, char32_t cp);

// Parses a plain decimal literal ("-12", "3.", ".5", "1e3"); rejects inf,
// nan, hex and anything with trailing text.
std::optional<double> parse_decimal(std::string_view s) noexcept;

// Removes thousands separators when `s` is a well-formed grouped number
// ("1,234,567.8"); otherwise returns `s` unchanged.
std::string strip_digit_grouping(std::string_view s);

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::span<const std::uint8_t> data);

// FNV-1a, used to fold string keys into PRNG seeds.
std::uint64_t fnv1a64(std::string_view s) noexcept;

// SplitMix64 finalizer (Steele, Lea & Flood 2014).
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Combines seed material into one 64-bit seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) noexcept;

// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace tabdpo::util
