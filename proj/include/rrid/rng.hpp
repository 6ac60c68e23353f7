#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rrid {

// Seeded generator with distribution helpers whose output is fixed by the
// engine alone. std::uniform_int_distribution and friends are
// implementation-defined, which would make synthetic datasets and sampler
// sequences differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller. Always consumes two draws.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates shuffle driven by below().
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Hex digest of the full engine state; recorded in checkpoints.
  std::string digest() const;

 private:
  std::mt19937_64 engine_;
};

}  // namespace rrid
