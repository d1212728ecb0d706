#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace smc {

inline double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / double(xs.size());
}

// Standard error of the mean for a correlated series via batch means.
inline double batch_means_se(std::span<const double> xs,
                             std::size_t n_batches = 50) {
  const std::size_t n = xs.size();
  const std::size_t len = n / n_batches;
  const double grand = mean_of(xs.subspan(0, len * n_batches));
  double ss = 0.0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < len; ++i) m += xs[b * len + i];
    m /= double(len);
    ss += (m - grand) * (m - grand);
  }
  const double var_batch = ss / double(n_batches - 1);
  return std::sqrt(var_batch / double(n_batches));
}

// Standard error for an i.i.d. series.
inline double iid_se(std::span<const double> xs) {
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / double(xs.size() - 1) / double(xs.size()));
}

}  // namespace smc
