#pragma once

#include <cstdint>
#include <limits>

namespace srlab {

/// Counter-based random stream.
///
/// Each draw is a pure function of (key, counter), so a stream can be split
/// into independent children keyed by an integer (experiment, trial, round)
/// without any shared state. Two streams built from the same key produce the
/// same sequence on every platform, which is what lets parallel trials
/// reproduce bit-identically regardless of scheduling.
///
/// Satisfies UniformRandomBitGenerator, but the helpers below should be
/// preferred over <random> distributions: those are implementation-defined.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next_u64(); }
  std::uint64_t next_u64() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;
  /// Standard normal draw (Box-Muller, consumes two words).
  double normal() noexcept;

  /// Independent child stream; children with distinct ids never overlap.
  RandomStream split(std::uint64_t id) const noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  RandomStream(std::uint64_t key, std::uint64_t counter) noexcept : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_;
};

/// Stream for one (experiment, trial) pair derived from a run seed.
RandomStream trial_stream(std::uint64_t seed, std::uint64_t experiment, std::uint64_t trial) noexcept;

}  // namespace srlab
