#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dvp {

using Sha256 = std::array<std::uint8_t, 32>;

Sha256 sha256(std::span<const std::uint8_t> bytes);
Sha256 sha256(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);
// Throws Error(InvalidArgument) on odd length or a non-hex digit.
std::vector<std::uint8_t> from_hex(std::string_view hex);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// SplitMix64; the only PRNG used for anything that must be bit-stable
// across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [-1, 1) with 53-bit resolution; exact in IEEE arithmetic.
  double next_signed_unit() {
    return static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0;
  }

 private:
  std::uint64_t state_;
};

// First eight digest bytes as a little-endian integer.
std::uint64_t digest_seed(const Sha256& digest);

std::vector<std::uint8_t> read_file(const std::string& path);
// Write-temp-then-rename so readers never see a torn file.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::string& path, std::string_view text);

}  // namespace dvp
