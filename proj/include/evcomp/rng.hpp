#pragma once

#include <cstdint>

namespace evc {

// xoshiro256++ seeded through splitmix64. Hand-rolled so that draw
// sequences are bit-identical across platforms and stdlib versions,
// which the reproducibility guarantees depend on.
//
// stream(id) derives an independent generator from the original seed,
// so e.g. weight initialization and per-epoch data generation never
// share a draw sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // [0,1) with 53 random bits
  double uniform();

  // [lo,hi); throws if lo >= hi
  double uniform(double lo, double hi);

  // inclusive [lo,hi], unbiased (rejection sampling); throws if lo > hi
  int uniform_int(int lo, int hi);

  Rng stream(std::uint64_t id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
};

}  // namespace evc
