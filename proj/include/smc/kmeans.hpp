#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smc/matrix.hpp"
#include "smc/rng.hpp"

namespace smc {

struct KMeansResult {
  Matrix centers;                          // k x d
  std::vector<std::uint32_t> assignments;  // per point, argmin center
  double distortion = 0.0;                 // sum of squared distances
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> distortion_trace;    // one entry per Lloyd iteration
};

// Nearest-center index per point; ties broken by lowest center index.
std::vector<std::uint32_t> assign(const Matrix& points, const Matrix& centers);

// Center j = mean of its members. An empty cluster is re-seeded at the point
// currently farthest from its own cluster mean (each empty cluster takes a
// distinct point).
Matrix update_centers(const Matrix& points,
                      std::span<const std::uint32_t> assignments,
                      std::size_t k);

double distortion(const Matrix& points, const Matrix& centers,
                  std::span<const std::uint32_t> assignments);

// Alternates assign/update until assignments stop changing, the largest
// center movement drops below tol, or max_iter passes.
KMeansResult lloyd(const Matrix& points, const Matrix& init_centers,
                   std::size_t max_iter = 300, double tol = 1e-9);

// D^2 seeding: first center uniform from data, each next one sampled with
// probability proportional to squared distance from the closest chosen
// center.
Matrix kmeanspp_init(const Matrix& points, std::size_t k, RngStream& rng);

// k distinct data points chosen uniformly.
Matrix random_init(const Matrix& points, std::size_t k, RngStream& rng);

struct FailureMetric {
  double accuracy = 0.0;
  bool failed = true;
};

// Best label-permutation agreement between predicted assignments and true
// labels: exhaustive over k! for k <= 8, Hungarian matching above that.
// failed = accuracy < 0.90.
FailureMetric failure_metric(std::span<const std::uint32_t> predicted,
                             std::span<const std::uint32_t> true_labels,
                             std::size_t k);

}  // namespace smc
