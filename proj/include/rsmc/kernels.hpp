#pragma once

// Per-particle kernels used by the filters, in two flavours:
//
//   reference:: one particle at a time through the scalar model API. Kept as
//               the readable ground truth for tests.
//   parallel::  OpenMP over fixed-size particle chunks, batched Eigen products.
//
// Both consume identical random substreams (particle i draws from
// derive_seed(key, i)), so they agree up to floating-point summation order.
// Chunk boundaries do not depend on the thread count, which keeps parallel::
// results bit-identical for any number of threads.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rsmc/models.hpp"

namespace rsmc::kernels {

/// Particles per OpenMP work item.
inline constexpr Eigen::Index kChunk = 256;

struct Normalised {
  std::vector<double> weights;
  /// log of the mean of exp(log_weights).
  double log_mean = 0.0;
  /// False when every entry is -inf or NaN.
  bool ok = true;
};

namespace reference {

/// out.col(i) = A * prev.col(src(i)) + sqrt(Q) * z_i with src(i) = ancestors[i]
/// (or i when ancestors is empty).
void propagate(const LinearGaussianTransition& transition, const Matrix& prev,
               std::span<const std::size_t> ancestors, std::uint64_t key, Matrix& out);

void log_potentials(const GeneralisedLikelihood& gl, const Matrix& states, const Vector& y,
                    std::span<double> out);

Normalised normalise(std::span<const double> log_weights);

std::vector<std::size_t> multinomial(std::span<const double> weights, std::size_t n,
                                     std::uint64_t key);
std::vector<std::size_t> systematic(std::span<const double> weights, std::size_t n,
                                    std::uint64_t key);

}  // namespace reference

namespace parallel {

void propagate(const LinearGaussianTransition& transition, const Matrix& prev,
               std::span<const std::size_t> ancestors, std::uint64_t key, Matrix& out);

void log_potentials(const GeneralisedLikelihood& gl, const Matrix& states, const Vector& y,
                    std::span<double> out);

Normalised normalise(std::span<const double> log_weights);

std::vector<std::size_t> multinomial(std::span<const double> weights, std::size_t n,
                                     std::uint64_t key);
std::vector<std::size_t> systematic(std::span<const double> weights, std::size_t n,
                                    std::uint64_t key);

}  // namespace parallel

/// Cumulative sums with the final entry pinned to exactly 1.
std::vector<double> cumulative_weights(std::span<const double> weights);

/// First index whose cumulative weight exceeds u.
std::size_t categorical_index(std::span<const double> cdf, double u);

}  // namespace rsmc::kernels
