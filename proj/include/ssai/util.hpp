#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ssai {

inline constexpr std::string_view kLibraryVersion = "0.1.0";

/// SHA-256 hex digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// SplitMix64 finaliser; used to derive independent streams from (seed, counter).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// FNV-1a over the bytes, finalised with SplitMix64. Stable across platforms.
std::uint64_t stable_hash(std::string_view bytes, std::uint64_t seed = 0);

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double unit_interval(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Splits one line of unquoted comma-separated text. Trailing '\r' is dropped.
std::vector<std::string_view> split_csv(std::string_view line);

/// Shortest round-trip representation.
std::string format_exact(double v);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace ssai
