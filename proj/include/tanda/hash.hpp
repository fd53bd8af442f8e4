#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace tanda {

// 64-bit FNV-1a, used for run-manifest input digests and bit-identity checks.
inline uint64_t fnv1a64(const void* data, size_t size,
                        uint64_t hash = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x00000100000001b3ULL;
  }
  return hash;
}

inline uint64_t fnv1a64(const std::string& text) {
  return fnv1a64(text.data(), text.size());
}

uint64_t fnv1a64_file(const std::string& path);

std::string hex64(uint64_t value);

}  // namespace tanda
