#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "smc/kmeans.hpp"
#include "smc/rng.hpp"

using namespace smc;

namespace {

const double kGmmMeans[4][2] = {{0.7, 3.5}, {1.0, 1.5}, {2.7, 1.0}, {5.0, 3.5}};

void make_gmm(RngStream& rng, Matrix& points, std::vector<std::uint32_t>& labels,
              std::size_t per_cluster = 100, double sigma2 = 0.1) {
  const double sd = std::sqrt(sigma2);
  points = Matrix(4 * per_cluster, 2);
  labels.assign(4 * per_cluster, 0);
  std::size_t idx = 0;
  for (std::uint32_t c = 0; c < 4; ++c) {
    for (std::size_t i = 0; i < per_cluster; ++i, ++idx) {
      points(idx, 0) = rng.normal(kGmmMeans[c][0], sd);
      points(idx, 1) = rng.normal(kGmmMeans[c][1], sd);
      labels[idx] = c;
    }
  }
}

Matrix true_centers() {
  Matrix c(4, 2);
  for (int j = 0; j < 4; ++j) {
    c(j, 0) = kGmmMeans[j][0];
    c(j, 1) = kGmmMeans[j][1];
  }
  return c;
}

}  // namespace

TEST_CASE("assign basics and tie rule") {
  Matrix centers(2, 1);
  centers(0, 0) = 0.0;
  centers(1, 0) = 2.0;
  Matrix pts(3, 1);
  pts(0, 0) = 0.0;   // exactly center 0
  pts(1, 0) = 2.0;   // exactly center 1
  pts(2, 0) = 1.0;   // equidistant, tie -> 0
  auto a = assign(pts, centers);
  CHECK(a[0] == 0);
  CHECK(a[1] == 1);
  CHECK(a[2] == 0);
}

TEST_CASE("assign recovers generating labels with true means") {
  RngStream rng(101);
  Matrix pts;
  std::vector<std::uint32_t> labels;
  make_gmm(rng, pts, labels);
  auto a = assign(pts, true_centers());
  std::size_t agree = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) agree += (a[i] == labels[i]);
  CHECK(agree >= std::size_t(0.99 * double(labels.size())));
}

TEST_CASE("update_centers means and empty-cluster reseed") {
  Matrix pts(2, 1);
  pts(0, 0) = 0.0;
  pts(1, 0) = 2.0;
  std::vector<std::uint32_t> one_each{0, 1};
  Matrix c = update_centers(pts, one_each, 2);
  CHECK(c(0, 0) == 0.0);
  CHECK(c(1, 0) == 2.0);

  std::vector<std::uint32_t> same{0, 0};
  Matrix merged = update_centers(pts, same, 1);
  CHECK(merged(0, 0) == 1.0);

  // cluster 1 empty: reseeded at the point farthest from its own mean
  Matrix pts3(3, 1);
  pts3(0, 0) = 0.0;
  pts3(1, 0) = 1.0;
  pts3(2, 0) = 10.0;
  std::vector<std::uint32_t> with_empty{0, 0, 0};
  Matrix r = update_centers(pts3, with_empty, 2);
  CHECK(r(0, 0) == doctest::Approx(11.0 / 3));
  CHECK(r(1, 0) == 10.0);
}

TEST_CASE("update never increases distortion under fixed assignments") {
  RngStream rng(55);
  Matrix pts(200, 3);
  for (auto& v : pts.data) v = rng.uniform(-5, 5);
  Matrix centers(4, 3);
  for (auto& v : centers.data) v = rng.uniform(-5, 5);
  auto a = assign(pts, centers);
  double before = distortion(pts, centers, a);
  Matrix updated = update_centers(pts, a, 4);
  double after = distortion(pts, updated, a);
  CHECK(after <= before + 1e-12);
}

TEST_CASE("assign and update are translation invariant") {
  RngStream rng(56);
  Matrix pts(60, 2);
  for (auto& v : pts.data) v = rng.uniform(0, 4);
  Matrix centers(3, 2);
  for (auto& v : centers.data) v = rng.uniform(0, 4);

  Matrix pts_t = pts;
  Matrix centers_t = centers;
  for (std::size_t i = 0; i < pts_t.rows; ++i) {
    pts_t(i, 0) += 7.5;
    pts_t(i, 1) -= 3.25;
  }
  for (std::size_t j = 0; j < centers_t.rows; ++j) {
    centers_t(j, 0) += 7.5;
    centers_t(j, 1) -= 3.25;
  }
  CHECK(assign(pts, centers) == assign(pts_t, centers_t));

  auto a = assign(pts, centers);
  Matrix u = update_centers(pts, a, 3);
  Matrix ut = update_centers(pts_t, a, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(ut(j, 0) == doctest::Approx(u(j, 0) + 7.5));
    CHECK(ut(j, 1) == doctest::Approx(u(j, 1) - 3.25));
  }
}

TEST_CASE("lloyd converges in one iteration from a fixed point") {
  Matrix pts(4, 1);
  pts(0, 0) = 0.0;
  pts(1, 0) = 1.0;
  pts(2, 0) = 10.0;
  pts(3, 0) = 11.0;
  Matrix init(2, 1);
  init(0, 0) = 0.5;
  init(1, 0) = 10.5;
  auto res = lloyd(pts, init);
  CHECK(res.iterations == 1);
  CHECK(res.converged);
  CHECK(res.centers(0, 0) == 0.5);
  CHECK(res.centers(1, 0) == 10.5);
}

TEST_CASE("lloyd output is a fixed point with monotone distortion") {
  RngStream rng(102);
  Matrix pts;
  std::vector<std::uint32_t> labels;
  make_gmm(rng, pts, labels);
  Matrix init = kmeanspp_init(pts, 4, rng);
  auto res = lloyd(pts, init);
  CHECK(res.converged);
  CHECK(res.assignments == assign(pts, res.centers));
  Matrix re = update_centers(pts, res.assignments, 4);
  for (std::size_t j = 0; j < 4; ++j)
    CHECK(squared_distance(re.row(j), res.centers.row(j)) < 1e-16);
  for (std::size_t i = 1; i < res.distortion_trace.size(); ++i)
    CHECK(res.distortion_trace[i] <= res.distortion_trace[i - 1] + 1e-9);
}

TEST_CASE("two seeds in one cluster reach a worse local minimum") {
  RngStream rng(103);
  Matrix pts;
  std::vector<std::uint32_t> labels;
  make_gmm(rng, pts, labels);

  Matrix bad(4, 1);
  bad = Matrix(4, 2);
  bad(0, 0) = 0.6; bad(0, 1) = 3.5;
  bad(1, 0) = 0.8; bad(1, 1) = 3.5;  // both in cluster 1
  bad(2, 0) = 1.0; bad(2, 1) = 1.5;
  bad(3, 0) = 2.7; bad(3, 1) = 1.0;  // cluster 4 unclaimed
  auto stuck = lloyd(pts, bad);

  double best = stuck.distortion;
  for (int t = 0; t < 50; ++t) {
    auto r = lloyd(pts, kmeanspp_init(pts, 4, rng));
    best = std::min(best, r.distortion);
  }
  CHECK(stuck.distortion > best * 1.5);

  auto fm = failure_metric(stuck.assignments, labels, 4);
  CHECK(fm.failed);
}

TEST_CASE("paper data with true means converges to accuracy >= 0.99") {
  RngStream rng(104);
  Matrix pts;
  std::vector<std::uint32_t> labels;
  make_gmm(rng, pts, labels);
  auto res = lloyd(pts, true_centers());
  auto fm = failure_metric(res.assignments, labels, 4);
  CHECK(fm.accuracy >= 0.99);
  CHECK_FALSE(fm.failed);
}

TEST_CASE("kmeans++ with k equal to point count selects every point") {
  RngStream rng(105);
  Matrix pts(6, 2);
  for (auto& v : pts.data) v = rng.uniform(0, 1);
  Matrix centers = kmeanspp_init(pts, 6, rng);
  std::set<std::pair<double, double>> got, want;
  for (std::size_t i = 0; i < 6; ++i) {
    got.insert({centers(i, 0), centers(i, 1)});
    want.insert({pts(i, 0), pts(i, 1)});
  }
  CHECK(got == want);
}

TEST_CASE("kmeans++ never picks a duplicate of a chosen center") {
  Matrix pts(3, 1);
  pts(0, 0) = 1.0;
  pts(1, 0) = 1.0;  // duplicate
  pts(2, 0) = 5.0;
  RngStream rng(106);
  for (int t = 0; t < 200; ++t) {
    Matrix c = kmeanspp_init(pts, 2, rng);
    CHECK(c(0, 0) != c(1, 0));
  }
}

TEST_CASE("kmeans++ spreads over far-separated pairs") {
  Matrix pts(4, 1);
  pts(0, 0) = 0.0;
  pts(1, 0) = 0.1;
  pts(2, 0) = 10.0;
  pts(3, 0) = 10.1;
  RngStream rng(107);
  int same_pair = 0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Matrix c = kmeanspp_init(pts, 2, rng);
    bool left0 = c(0, 0) < 5.0, left1 = c(1, 0) < 5.0;
    if (left0 == left1) ++same_pair;
  }
  CHECK(same_pair < trials / 20);
}

TEST_CASE("random_init picks k distinct rows") {
  RngStream rng(108);
  Matrix pts(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    pts(i, 0) = double(i);
    pts(i, 1) = double(i) * 2;
  }
  Matrix c = random_init(pts, 4, rng);
  std::set<double> xs;
  for (std::size_t j = 0; j < 4; ++j) {
    xs.insert(c(j, 0));
    CHECK(c(j, 1) == 2 * c(j, 0));
  }
  CHECK(xs.size() == 4);
}

TEST_CASE("failure_metric on exact, permuted, and degraded labelings") {
  std::vector<std::uint32_t> truth, pred;
  for (std::uint32_t c = 0; c < 4; ++c)
    for (int i = 0; i < 100; ++i) truth.push_back(c);

  pred = truth;
  auto fm = failure_metric(pred, truth, 4);
  CHECK(fm.accuracy == doctest::Approx(1.0));
  CHECK_FALSE(fm.failed);

  // relabel by a permutation: still perfect
  const std::uint32_t perm[4] = {2, 0, 3, 1};
  for (auto& p : pred) p = perm[p];
  fm = failure_metric(pred, truth, 4);
  CHECK(fm.accuracy == doctest::Approx(1.0));
  CHECK_FALSE(fm.failed);

  // split cluster 0 across labels 0/1, merge clusters 1 and 2 into label 2
  pred.assign(truth.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) pred[i] = i % 2 == 0 ? 0 : 1;
    else if (truth[i] == 1 || truth[i] == 2) pred[i] = 2;
    else pred[i] = 3;
  }
  fm = failure_metric(pred, truth, 4);
  CHECK(fm.accuracy <= 0.75);
  CHECK(fm.failed);
}

TEST_CASE("hungarian matching agrees with brute force beyond 8 clusters") {
  const std::size_t k = 9, n = 600;
  RngStream rng(109);
  std::vector<std::uint32_t> truth(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    truth[i] = std::uint32_t(rng.uniform_index(k));
    pred[i] = std::uint32_t(rng.uniform_index(k));
  }
  auto fm = failure_metric(pred, truth, k);  // k > 8 -> hungarian path

  std::vector<std::vector<int>> count(k, std::vector<int>(k, 0));
  for (std::size_t i = 0; i < n; ++i) ++count[pred[i]][truth[i]];
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  int best = 0;
  do {
    int s = 0;
    for (std::size_t i = 0; i < k; ++i) s += count[i][perm[i]];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));

  CHECK(fm.accuracy == doctest::Approx(best / double(n)));
}
