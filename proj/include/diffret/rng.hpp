#pragma once

#include <cstdint>
#include <string_view>

namespace diffret {

// xoshiro256++ with a splitmix64 seeder and Box-Muller normals.
// std::mt19937 + std::normal_distribution are not bit-stable across standard
// library implementations; this generator is, so seeded runs reproduce
// everywhere. The algorithm tag is echoed into every config output.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256++/box-muller";

  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::string_view algorithm() const { return kAlgorithm; }

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal.
  double normal();

  // Deterministically derived child stream; identical (seed, key) pairs give
  // identical streams, distinct keys give decorrelated ones.
  SeededRng split(std::uint64_t key) const;

  // Raw state access for checkpoint echo / restore.
  void state(std::uint64_t out[4]) const;
  void set_state(const std::uint64_t in[4]);

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace diffret
