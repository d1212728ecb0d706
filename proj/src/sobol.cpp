#include "smc/sobol.hpp"

#include <bit>
#include <stdexcept>

#include "smc/errors.hpp"

namespace smc {
namespace {

constexpr std::size_t kMaxDim = 32;
constexpr int kBits = 32;

// Primitive-polynomial data for dimensions 2..32 (dimension 1 needs none):
// degree s, coefficient bits a, and the first s direction integers m (odd).
struct PolyEntry {
  int s;
  std::uint32_t a;
  std::uint32_t m[7];
};

constexpr PolyEntry kPoly[kMaxDim - 1] = {
    {1, 0u, {1u}},
    {2, 1u, {1u, 3u}},
    {3, 1u, {1u, 3u, 1u}},
    {3, 2u, {1u, 1u, 1u}},
    {4, 1u, {1u, 1u, 3u, 3u}},
    {4, 4u, {1u, 3u, 5u, 13u}},
    {5, 2u, {1u, 1u, 5u, 5u, 17u}},
    {5, 4u, {1u, 1u, 5u, 5u, 5u}},
    {5, 7u, {1u, 1u, 7u, 11u, 19u}},
    {5, 11u, {1u, 1u, 5u, 1u, 1u}},
    {5, 13u, {1u, 1u, 1u, 3u, 11u}},
    {5, 14u, {1u, 3u, 5u, 5u, 31u}},
    {6, 1u, {1u, 3u, 3u, 9u, 7u, 49u}},
    {6, 13u, {1u, 1u, 1u, 15u, 21u, 21u}},
    {6, 16u, {1u, 3u, 1u, 13u, 27u, 49u}},
    {6, 19u, {1u, 1u, 1u, 15u, 7u, 5u}},
    {6, 22u, {1u, 3u, 1u, 15u, 13u, 25u}},
    {6, 25u, {1u, 1u, 5u, 5u, 19u, 61u}},
    {7, 1u, {1u, 3u, 7u, 11u, 23u, 15u, 103u}},
    {7, 4u, {1u, 3u, 7u, 13u, 13u, 15u, 69u}},
    {7, 7u, {1u, 1u, 3u, 13u, 7u, 35u, 63u}},
    {7, 8u, {1u, 3u, 5u, 9u, 1u, 25u, 53u}},
    {7, 14u, {1u, 3u, 1u, 13u, 9u, 35u, 107u}},
    {7, 19u, {1u, 3u, 1u, 5u, 27u, 61u, 31u}},
    {7, 21u, {1u, 1u, 5u, 11u, 19u, 41u, 61u}},
    {7, 28u, {1u, 3u, 5u, 3u, 3u, 13u, 69u}},
    {7, 31u, {1u, 1u, 7u, 13u, 1u, 19u, 1u}},
    {7, 32u, {1u, 3u, 7u, 5u, 13u, 19u, 59u}},
    {7, 37u, {1u, 1u, 3u, 9u, 25u, 29u, 41u}},
    {7, 41u, {1u, 3u, 5u, 13u, 23u, 1u, 55u}},
    {7, 42u, {1u, 3u, 7u, 3u, 13u, 59u, 17u}},
};

}  // namespace

SobolSequence::SobolSequence(std::size_t dim) : dim_(dim) {
  if (dim == 0 || dim > kMaxDim)
    throw UnsupportedDimensionError(
        "sobol sequence supports dimensions 1..32, got " +
        std::to_string(dim));
  x_.assign(dim, 0u);
  v_.assign(dim * kBits, 0u);
  for (std::size_t j = 0; j < dim; ++j) {
    std::uint32_t* v = &v_[j * kBits];
    if (j == 0) {
      for (int i = 0; i < kBits; ++i) v[i] = 1u << (31 - i);
      continue;
    }
    const PolyEntry& p = kPoly[j - 1];
    for (int i = 0; i < p.s; ++i) v[i] = p.m[i] << (31 - i);
    for (int i = p.s; i < kBits; ++i) {
      v[i] = v[i - p.s] ^ (v[i - p.s] >> p.s);
      for (int k = 1; k < p.s; ++k)
        if ((p.a >> (p.s - 1 - k)) & 1u) v[i] ^= v[i - k];
    }
  }
}

void SobolSequence::next(std::span<double> out) {
  // Gray-code step: flip the direction number indexed by the lowest zero bit
  // of the running counter. Counter 0 maps the zero point onto the center.
  if (count_ == 0xffffffffULL)
    throw std::runtime_error("sobol sequence exhausted (2^32-1 points)");
  int c = std::countr_one(static_cast<std::uint32_t>(count_));
  for (std::size_t j = 0; j < dim_; ++j) {
    x_[j] ^= v_[j * kBits + c];
    out[j] = static_cast<double>(x_[j]) * 0x1p-32;
  }
  ++count_;
}

Matrix sobol_points(std::size_t n, std::size_t dim) {
  SobolSequence seq(dim);
  Matrix pts(n, dim);
  for (std::size_t i = 0; i < n; ++i) seq.next(pts.row(i));
  return pts;
}

Matrix sobol_points(std::size_t n, std::size_t dim,
                    std::span<const double> lo, std::span<const double> hi) {
  Matrix pts = sobol_points(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = pts.row(i);
    for (std::size_t j = 0; j < dim; ++j)
      r[j] = lo[j] + r[j] * (hi[j] - lo[j]);
  }
  return pts;
}

}  // namespace smc
