#pragma once

#include <cstdint>
#include <string_view>

namespace optlab {

// FNV-1a over bytes; stable across platforms, used for config and artifact
// fingerprints, not for security.
constexpr std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace optlab
