#pragma once

// Counter-based random streams.
//
// Every random draw in the library comes from a CounterRng whose key is a pure
// function of (seed, tags...). Substream layout used by the filters:
//
//   run seed       : derive_seed(base_seed, run_id)
//   step key       : derive_seed(run seed, t)            t = 0 for initialisation
//   purpose key    : derive_seed(step key, StreamPurpose)
//   particle key   : derive_seed(purpose key, i)
//
// Draws for particle i never depend on how particles are split across threads.

#include <cstdint>
#include <limits>

namespace rsmc {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 output finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return mix64(parent ^ mix64(tag * kGoldenGamma + 0x632BE59BD9B4E019ULL));
}

enum class StreamPurpose : std::uint64_t {
  Initialise = 1,
  Propagate = 2,
  Resample = 3,
  Predictive = 4,
  FirstStage = 5,
  Backward = 6,
  States = 7,
  ObservationNoise = 8,
  Contamination = 9,
};

constexpr std::uint64_t derive_seed(std::uint64_t parent, StreamPurpose purpose) noexcept {
  return derive_seed(parent, static_cast<std::uint64_t>(purpose) + 0xA5A5000000000000ULL);
}

/// SplitMix64 generator keyed by a derived seed. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) noexcept : state_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal (Box-Muller, second variate cached).
  double normal() noexcept;

  /// Exponential with unit mean.
  double exponential() noexcept;

  /// Student's t with `dof` degrees of freedom (unit scale).
  double student_t(double dof) noexcept;

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace rsmc
