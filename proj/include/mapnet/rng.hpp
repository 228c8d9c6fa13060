#pragma once

#include <cstdint>

namespace mapnet {

// xoshiro256++ with splitmix64 seeding. Self-contained so that seeded runs are
// reproducible independent of the standard library's distribution
// implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();
    // [0, 1)
    double uniform();
    double uniform(double lo, double hi);
    // inclusive bounds
    int uniform_int(int lo, int hi);
    double normal();

    // Derives a decorrelated child seed; used for per-step / per-sample
    // streams so ordering of consumption elsewhere cannot perturb them.
    static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0);

  private:
    uint64_t s_[4];
};

}  // namespace mapnet
