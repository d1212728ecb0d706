#include "smc/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace smc {
namespace {

// Minimum-cost perfect matching on a square cost matrix (potentials method,
// O(k^3)). Returns match[col] = row.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(n);
  for (int j = 1; j <= n; ++j) match[j - 1] = p[j] - 1;
  return match;
}

}  // namespace

std::vector<std::uint32_t> assign(const Matrix& points, const Matrix& centers) {
  std::vector<std::uint32_t> out(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) {
    auto p = points.row(i);
    std::uint32_t best = 0;
    double best_d = squared_distance(p, centers.row(0));
    for (std::size_t j = 1; j < centers.rows; ++j) {
      double d = squared_distance(p, centers.row(j));
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(j);
      }
    }
    out[i] = best;
  }
  return out;
}

Matrix update_centers(const Matrix& points,
                      std::span<const std::uint32_t> assignments,
                      std::size_t k) {
  const std::size_t d = points.cols;
  Matrix centers(k, d);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.rows; ++i) {
    auto p = points.row(i);
    auto c = centers.row(assignments[i]);
    for (std::size_t m = 0; m < d; ++m) c[m] += p[m];
    ++counts[assignments[i]];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] == 0) continue;
    auto c = centers.row(j);
    for (std::size_t m = 0; m < d; ++m) c[m] /= double(counts[j]);
  }

  bool any_empty = false;
  for (std::size_t j = 0; j < k; ++j)
    if (counts[j] == 0) any_empty = true;
  if (!any_empty) return centers;

  // Re-seed each empty cluster at the point farthest from its own (non-empty)
  // cluster mean; a point used once is not reused for another empty cluster.
  std::vector<double> dist(points.rows);
  for (std::size_t i = 0; i < points.rows; ++i) {
    if (counts[assignments[i]] == 0)
      dist[i] = 0.0;  // its old center is itself being reseeded
    else
      dist[i] = squared_distance(points.row(i), centers.row(assignments[i]));
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] != 0) continue;
    std::size_t far = 0;
    for (std::size_t i = 1; i < points.rows; ++i)
      if (dist[i] > dist[far]) far = i;
    auto src = points.row(far);
    std::copy(src.begin(), src.end(), centers.row(j).begin());
    dist[far] = -1.0;
  }
  return centers;
}

double distortion(const Matrix& points, const Matrix& centers,
                  std::span<const std::uint32_t> assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i)
    total += squared_distance(points.row(i), centers.row(assignments[i]));
  return total;
}

KMeansResult lloyd(const Matrix& points, const Matrix& init_centers,
                   std::size_t max_iter, double tol) {
  const std::size_t k = init_centers.rows;
  KMeansResult res;
  res.centers = init_centers;
  res.assignments = assign(points, res.centers);
  while (res.iterations < max_iter) {
    ++res.iterations;
    Matrix next = update_centers(points, res.assignments, k);
    double move2 = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      move2 = std::max(move2,
                       squared_distance(next.row(j), res.centers.row(j)));
    res.centers = std::move(next);
    auto next_assign = assign(points, res.centers);
    res.distortion_trace.push_back(distortion(points, res.centers, next_assign));
    bool unchanged = (next_assign == res.assignments);
    res.assignments = std::move(next_assign);
    if (unchanged || std::sqrt(move2) < tol) {
      res.converged = true;
      break;
    }
  }
  res.distortion = res.distortion_trace.empty()
                       ? distortion(points, res.centers, res.assignments)
                       : res.distortion_trace.back();
  return res;
}

Matrix kmeanspp_init(const Matrix& points, std::size_t k, RngStream& rng) {
  const std::size_t n = points.rows;
  if (k > n) throw std::invalid_argument("kmeanspp_init: k > point count");
  Matrix centers(k, points.cols);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.uniform_index(n);
  {
    auto src = points.row(first);
    std::copy(src.begin(), src.end(), centers.row(0).begin());
  }
  std::vector<double> cdf(n);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i],
                       squared_distance(points.row(i), centers.row(c - 1)));
      total += d2[i];
      cdf[i] = total;
    }
    std::size_t pick;
    if (total > 0.0) {
      pick = rng.sample_cdf(cdf);
    } else {
      // every remaining point coincides with a chosen center
      pick = rng.uniform_index(n);
    }
    auto src = points.row(pick);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
  }
  return centers;
}

Matrix random_init(const Matrix& points, std::size_t k, RngStream& rng) {
  const std::size_t n = points.rows;
  if (k > n) throw std::invalid_argument("random_init: k > point count");
  std::vector<std::size_t> idx = random_permutation(n, rng);
  Matrix centers(k, points.cols);
  for (std::size_t j = 0; j < k; ++j) {
    auto src = points.row(idx[j]);
    std::copy(src.begin(), src.end(), centers.row(j).begin());
  }
  return centers;
}

FailureMetric failure_metric(std::span<const std::uint32_t> predicted,
                             std::span<const std::uint32_t> true_labels,
                             std::size_t k) {
  if (predicted.size() != true_labels.size())
    throw std::invalid_argument("failure_metric: size mismatch");
  const std::size_t n = predicted.size();
  std::vector<std::vector<double>> count(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (predicted[i] >= k || true_labels[i] >= k)
      throw std::invalid_argument("failure_metric: label out of range");
    count[predicted[i]][true_labels[i]] += 1.0;
  }
  double best = 0.0;
  if (k <= 8) {
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += count[i][perm[i]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    double mx = 0.0;
    for (auto& row : count)
      for (double v : row) mx = std::max(mx, v);
    std::vector<std::vector<double>> cost(k, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) cost[i][j] = mx - count[i][j];
    auto match = hungarian(cost);
    for (std::size_t j = 0; j < k; ++j) best += count[match[j]][j];
  }
  FailureMetric out;
  out.accuracy = n ? best / double(n) : 0.0;
  out.failed = out.accuracy < 0.90;
  return out;
}

}  // namespace smc
