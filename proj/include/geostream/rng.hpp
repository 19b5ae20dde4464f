#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace geostream {

// Deterministic random source. mt19937_64 has a standard-specified output
// sequence, and all distributions below are hand-rolled from raw 64-bit
// draws, so a given seed produces bit-identical streams on every platform.
// std::uniform_real_distribution and friends are implementation-defined and
// must not be used anywhere in this library.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }
  // Number of raw 64-bit words consumed so far.
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64() {
    ++position_;
    return gen_();
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller. u1 is shifted into (0, 1] so the log
  // never sees zero. One value per call; the sibling value is discarded to
  // keep the draw count predictable.
  double normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [lo, hi], both inclusive. Rejection-free modulo is
  // fine here: ranges are tiny compared to 2^64 so the bias is far below
  // anything observable.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Child stream decorrelated from this one; advances this stream by one.
  RngState fork() {
    return RngState(next_u64() ^ 0x9e3779b97f4a7c15ull);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t position_ = 0;
  std::mt19937_64 gen_;
};

}  // namespace geostream
