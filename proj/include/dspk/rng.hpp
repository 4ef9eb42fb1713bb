#pragma once

// Deterministic RNG. std::mt19937_64 gives a portable bit stream, but the
// standard distributions are implementation-defined, so the distribution
// functions here are written out explicitly. State round-trips through
// text streams so checkpoints can resume bit-identically.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

#include "dspk/common.hpp"

namespace dspk {

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
  uint64_t uniform_below(uint64_t n) {
    check(n > 0, "Rng::uniform_below: n must be positive");
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Derived sub-stream; advances this generator once.
  Rng fork(uint64_t salt) { return Rng(mix_seed(next_u64(), salt)); }

  void save(std::ostream& os) const {
    uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(spare_));
    std::memcpy(&bits, &spare_, sizeof(bits));
    os << eng_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << bits;
  }

  void load(std::istream& is) {
    int flag = 0;
    uint64_t bits = 0;
    is >> eng_ >> flag >> bits;
    if (!is) throw CheckpointError("Rng::load: malformed rng state");
    has_spare_ = flag != 0;
    std::memcpy(&spare_, &bits, sizeof(bits));
  }

  bool operator==(const Rng& o) const {
    return eng_ == o.eng_ && has_spare_ == o.has_spare_ &&
           (!has_spare_ || spare_ == o.spare_);
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dspk
