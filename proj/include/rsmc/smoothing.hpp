#pragma once

// Forward-filtering backward-sampling over stored particle ensembles.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rsmc/filters.hpp"

namespace rsmc {

struct SmoothedTrajectories {
  /// states[t] is state_dim x M: the t-th state of every sampled trajectory.
  std::vector<Matrix> states;
  std::size_t particles = 0;
  /// Transition-density evaluations performed by the backward pass.
  std::size_t kernel_evaluations = 0;

  std::size_t trajectories() const { return states.empty() ? 0 : static_cast<std::size_t>(states.front().cols()); }
  Matrix means() const;       // T x state_dim
  Matrix quantiles(double q) const;  // T x state_dim
};

/// Needs filter output produced with spec.store_ensembles. The backward kernel
/// uses only the transition density and the stored forward weights.
SmoothedTrajectories ffbs(const FilterOutput& forward, const LinearGaussianTransition& transition,
                          std::size_t trajectories, std::uint64_t seed);

}  // namespace rsmc
