#pragma once

// Shared error taxonomy and small helpers used across the library.

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dspk {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or size mismatch between tensors/images.
struct DimensionError : Error {
  using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
  using Error::Error;
};

// Precondition or invariant violation (bad argument, bad config).
struct ContractError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

// Phantom inclusion placement gave up after bounded retries.
struct PlacementError : Error {
  using Error::Error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

inline void check_dim(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

// 64-bit FNV-1a, used for config hashes and parameter fingerprints.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

// splitmix64; used to derive per-item seeds from a master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace dspk
