#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace iotprint {

/// Portable seeded generator.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so the
/// derived draws are implemented here:
///   - uniform_below(n): rejection sampling on the top of the 64-bit range
///     (no modulo bias);
///   - uniform01(): the top 53 bits scaled by 2^-53, in [0, 1);
///   - normal(): Box-Muller on two uniform01() draws, caching the second value.
/// Identical seeds produce identical sequences on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  std::uint64_t uniform_below(std::uint64_t bound);
  double uniform01();
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent sub-seed for a named stream (splitmix64 over the
/// seed mixed with an FNV-1a hash of the tag).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace iotprint
