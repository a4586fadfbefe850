#pragma once

#include <cstdint>
#include <random>

namespace eses {

// A seeded random stream. Every Monte Carlo consumer owns one; streams are
// never shared between threads. Substreams are derived through std::seed_seq,
// whose mixing algorithm is fixed by the standard, so a (master, index) pair
// maps to the same engine state on every platform and thread count.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
  }

  // Stream for work item `index` under `master`. `tag` separates unrelated
  // consumers that share a master seed and index space.
  static RandomStream derive(std::uint64_t master, std::uint64_t index, std::uint64_t tag = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index),  static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(tag),    static_cast<std::uint32_t>(tag >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return RandomStream((static_cast<std::uint64_t>(words[1]) << 32) | words[0]);
  }

  RandomStream substream(std::uint64_t index) const { return derive(seed_, index); }

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sigma) { return mean + sigma * normal_(engine_); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  // Uniform integer in [0, count).
  std::uint64_t index(std::uint64_t count) {
    return std::uniform_int_distribution<std::uint64_t>(0, count - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace eses
