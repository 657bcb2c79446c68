#pragma once

#include <cstdint>
#include <cstdio>
#include <initializer_list>
#include <string_view>

namespace persim {

// SplitMix64 (Steele, Lea, Flood 2014). Fixed-width integer arithmetic only,
// so a given seed yields the same stream on every platform and compiler.
// All reproducible sampling in this library draws from it.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Draw in [0, n). Plain modulo mapping; the bias is below 2^-50 for the
  // population sizes handled here and the mapping is part of the documented
  // reproducibility contract.
  std::uint64_t bounded(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

 private:
  std::uint64_t state_;
};

// Derives a subcomponent seed from a base seed and a list of string tags:
// FNV-1a 64 over the decimal rendering of `base` followed by each tag, with
// 0x1F separators. Used to fan one run seed out to samplers and request seeds.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::string_view> parts) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](char c) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  };
  char buf[24];
  int n = std::snprintf(buf, sizeof buf, "%llu",
                        static_cast<unsigned long long>(base));
  for (int i = 0; i < n; ++i) mix(buf[i]);
  for (std::string_view part : parts) {
    mix('\x1f');
    for (char c : part) mix(c);
  }
  return h;
}

}  // namespace persim
