#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace puridiver {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Per-component sub-seed derivation. Each (component, index) pair gets an
// independent stream, so extra draws in one component never shift another.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view component,
                                 std::uint64_t index = 0) {
  return mix64(mix64(base ^ hash_tag(component)) ^ index);
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::string_view component,
                                std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(base, component, index));
}

}  // namespace puridiver
