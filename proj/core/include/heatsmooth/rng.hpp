#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace heatsmooth {

// Deterministic 64-bit generator (splitmix64 core). The <random> engines are
// portable but the distributions are not; everything here is pinned so that
// identical seeds give bit-identical streams on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller; one spare value is cached.
  double normal();
  std::vector<double> normal_vec(std::size_t n);

  // Uniform integer in [0, n), n >= 1. Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Independent child stream addressed by a path of ids, e.g.
  // Rng::stream(seed, {epoch, batch, example}). Order-sensitive.
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Seeded in-place Fisher-Yates.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);

}  // namespace heatsmooth
