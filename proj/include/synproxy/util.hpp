// Small deterministic helpers shared across modules. Simulation results
// must be bit-stable for a given seed, so random draws avoid the
// implementation-defined std:: distributions.

#pragma once

#include <cstdint>

namespace synproxy {

constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// splitmix64 stream; also used to derive independent per-component
// seeds from one scenario seed.
class DetRng {
  public:
    explicit DetRng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n); modulo bias is irrelevant at the scales used here.
    uint64_t below(uint64_t n) { return n ? next() % n : 0; }

    uint32_t range_u32(uint32_t lo, uint32_t hi) {  // inclusive bounds
        return lo + static_cast<uint32_t>(below(static_cast<uint64_t>(hi) - lo + 1));
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return unit() < p; }

    DetRng fork(uint64_t tag) { return DetRng(mix64(state_ ^ mix64(tag))); }

  private:
    uint64_t state_;
};

}  // namespace synproxy
