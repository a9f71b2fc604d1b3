#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace uniembed {

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seeded 64-bit generator with named child streams.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distribution transforms are implemented here rather than taken
/// from <random> so that draws are identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix64(seed)) {}

  /// Independent stream keyed by `stream`. Splitting does not advance this
  /// generator, so adding a stream never perturbs existing ones.
  Rng split(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream + 0x51ed2701u))); }

  std::uint64_t seed() const noexcept { return seed_; }

  result_type operator()() { return engine_(); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n); unbiased.
  std::size_t index(std::size_t n);

  /// Standard normal (Marsaglia polar method).
  double normal();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace uniembed
