#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smc/matrix.hpp"

namespace smc {

// Standard (unscrambled) Sobol sequence, Gray-code construction, direction
// numbers for up to 32 dimensions. The all-zero point is skipped: the first
// point produced is the box center (0.5, ..., 0.5).
class SobolSequence {
 public:
  explicit SobolSequence(std::size_t dim);  // throws UnsupportedDimensionError

  std::size_t dim() const { return dim_; }

  // Writes the next point into out (size dim), components in [0, 1).
  void next(std::span<double> out);

 private:
  std::size_t dim_;
  std::uint64_t count_ = 0;               // points emitted so far
  std::vector<std::uint32_t> x_;          // current integer state per dim
  std::vector<std::uint32_t> v_;          // direction numbers, dim x 32
};

// First n points (zero point skipped) in the unit cube.
Matrix sobol_points(std::size_t n, std::size_t dim);

// Same, scaled into the axis-aligned box [lo_j, hi_j] per dimension.
Matrix sobol_points(std::size_t n, std::size_t dim,
                    std::span<const double> lo, std::span<const double> hi);

}  // namespace smc
