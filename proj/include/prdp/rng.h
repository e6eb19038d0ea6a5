// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef PRDP_RNG_H_
#define PRDP_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace prdp {

// Seedable generator shared by every stochastic routine. Draw order is part
// of the reproducibility contract: same seed, same call sequence, same values.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  void fill_normal(std::span<double> out) {
    for (double& v : out) v = normal();
  }
  std::vector<double> normals(std::size_t n) {
    std::vector<double> out(n);
    fill_normal(out);
    return out;
  }

  // Derives an independent child seed; used to give each sample index or
  // prompt its own stream.
  std::uint64_t fork() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// SplitMix64 step; mixes (seed, a, b) into a well-spread child seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(seed) ^ a) ^ b);
}

}  // namespace prdp

#endif  // PRDP_RNG_H_
