#ifndef IPFSIM_RNG_HPP
#define IPFSIM_RNG_HPP

#include <cstdint>
#include <random>

namespace ipf {

// mt19937_64 with hand-rolled reductions. The std::*_distribution adapters
// are implementation defined, so byte-identical output across toolchains
// requires doing the reduction ourselves.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform in [0, n). n == 0 returns 0.
  std::uint64_t uniform(std::uint64_t n) {
    if (n == 0) return 0;
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Uniform in [lo, hi] inclusive.
  std::uint64_t range(std::uint64_t lo, std::uint64_t hi) {
    return lo + uniform(hi - lo + 1);
  }

  // Uniform double in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool chance(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return unit() < p;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace ipf

#endif
