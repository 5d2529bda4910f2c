#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ssdg {

using Rng = std::mt19937_64;

// FNV-1a, used to turn stream names into seeds stably across platforms.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

// Independent named stream under a root seed. Changing how many draws one
// stream consumes never shifts another stream.
inline Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  const std::uint64_t h = fnv1a(name);
  std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace ssdg
