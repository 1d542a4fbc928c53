#pragma once

#include <cstdint>

namespace quenchmc {

// Counter-based generator: output i is splitmix64 evaluated at
// seed + (i+1) * golden-ratio increment.  Chain streams are derived by
// XOR-ing the chain index into the seed.  A bit reservoir serves draws
// that consume a fixed number of bits, so trajectories are reproducible
// bit for bit across platforms and thread counts.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static CounterRng stream(std::uint64_t seed, std::uint64_t index) {
    return CounterRng(seed ^ index);
  }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, bound).  Modulo bias is below bound / 2^64,
  // irrelevant at the register sizes used here.
  std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

  // Exactly nbits bits from the reservoir, low bit first.
  std::uint64_t next_bits(int nbits) {
    std::uint64_t out = 0;
    for (int i = 0; i < nbits; ++i) {
      if (reservoir_size_ == 0) {
        reservoir_ = next_u64();
        reservoir_size_ = 64;
      }
      out |= (reservoir_ & 1ull) << i;
      reservoir_ >>= 1;
      --reservoir_size_;
    }
    return out;
  }

private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t reservoir_ = 0;
  int reservoir_size_ = 0;
};

}  // namespace quenchmc
