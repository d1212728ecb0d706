#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "smc/cluster_filter.hpp"
#include "smc/kmeans.hpp"
#include "test_models.hpp"

using namespace smc;
using namespace smc::testing;

namespace {

// Fixed assignment map, ignores the data.
class FixedClusterer : public Clusterer {
 public:
  explicit FixedClusterer(std::vector<std::uint32_t> a) : a_(std::move(a)) {}
  std::vector<std::uint32_t> cluster(const Matrix&, std::size_t,
                                     RngStream&) const override {
    return a_;
  }

 private:
  std::vector<std::uint32_t> a_;
};

class SingleClusterer : public Clusterer {
 public:
  std::vector<std::uint32_t> cluster(const Matrix& points, std::size_t,
                                     RngStream&) const override {
    return std::vector<std::uint32_t>(points.rows, 0);
  }
};

WeightedParticleSet make_set(const std::vector<double>& states,
                             const std::vector<double>& weights) {
  WeightedParticleSet set(states.size(), 1);
  for (std::size_t i = 0; i < states.size(); ++i) set.state(i)[0] = states[i];
  std::copy(weights.begin(), weights.end(), set.weights().begin());
  return set;
}

}  // namespace

TEST_CASE("cumulative cluster weights") {
  std::vector<double> w{0.1, 0.2, 0.3, 0.4};
  std::vector<std::uint32_t> a{0, 0, 1, 1};
  auto v = cumulative_cluster_weights(w, a, 2);
  CHECK(v[0] == doctest::Approx(0.3));
  CHECK(v[1] == doctest::Approx(0.7));

  std::vector<std::uint32_t> all_zero{0, 0, 0, 0};
  auto v1 = cumulative_cluster_weights(w, all_zero, 1);
  CHECK(v1[0] == doctest::Approx(1.0));

  std::vector<double> unif(4, 0.25);
  auto v2 = cumulative_cluster_weights(unif, a, 2);
  CHECK(v2[0] == doctest::Approx(0.5));  // |C_j|/N
  CHECK(v2[1] == doctest::Approx(0.5));
}

TEST_CASE("make_partition prunes empty clusters and keeps totals") {
  std::vector<double> w{0.25, 0.25, 0.25, 0.25};
  std::vector<std::uint32_t> a{0, 3, 3, 0};  // clusters 1,2 empty
  auto part = make_partition(a, 4, w);
  CHECK(part.k == 2);
  CHECK(part.assignments == std::vector<std::uint32_t>{0, 1, 1, 0});
  CHECK(part.sizes[0] == 2);
  CHECK(part.sizes[1] == 2);
  CHECK(std::accumulate(part.sizes.begin(), part.sizes.end(), 0u) == 4u);
  double vsum = part.cumulative_weights[0] + part.cumulative_weights[1];
  CHECK(vsum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("within-cluster resample respects weights and cluster sizes") {
  // cluster 0 holds particles {0,1} with weights [w, 0], cluster 1 holds
  // {2,3} with equal weights
  std::vector<std::uint32_t> assign{0, 0, 1, 1};

  // deterministic branch: all of cluster 0's weight on particle 0
  {
    auto set = make_set({10, 11, 20, 21}, {0.5, 0.0, 0.25, 0.25});
    std::vector<double> w(set.weights().begin(), set.weights().end());
    auto part = make_partition(assign, 2, w);
    RngStream rng(17);
    auto source = within_cluster_resample(set, part, w, rng);
    CHECK(set.state(0)[0] == 10.0);
    CHECK(set.state(1)[0] == 10.0);
    CHECK(source == std::vector<std::uint32_t>{0, 0, 1, 1});
    bool c1_ok = (set.state(2)[0] == 20.0 || set.state(2)[0] == 21.0) &&
                 (set.state(3)[0] == 20.0 || set.state(3)[0] == 21.0);
    CHECK(c1_ok);
  }

  // frequency branch: cluster 1 draws each member about half the time
  {
    int hits20 = 0, total = 0;
    const int reps = 10000;
    for (int rep = 0; rep < reps; ++rep) {
      auto set = make_set({10, 11, 20, 21}, {0.5, 0.0, 0.25, 0.25});
      std::vector<double> w(set.weights().begin(), set.weights().end());
      auto part = make_partition(assign, 2, w);
      RngStream rng(1000 + rep);
      within_cluster_resample(set, part, w, rng);
      for (int slot = 2; slot < 4; ++slot) {
        hits20 += set.state(slot)[0] == 20.0;
        ++total;
      }
    }
    double freq = hits20 / double(total);
    double sigma = std::sqrt(0.25 / total);
    CHECK(std::abs(freq - 0.5) < 3.0 * sigma);
  }
}

TEST_CASE("zero-weight cluster falls back to uniform within-cluster draws") {
  std::vector<std::uint32_t> assign{0, 0, 1, 1};
  int hits10 = 0;
  const int reps = 4000;
  for (int rep = 0; rep < reps; ++rep) {
    auto set = make_set({10, 11, 20, 21}, {0.0, 0.0, 0.5, 0.5});
    std::vector<double> w(set.weights().begin(), set.weights().end());
    auto part = make_partition(assign, 2, w);
    RngStream rng(5000 + rep);
    within_cluster_resample(set, part, w, rng);
    hits10 += set.state(0)[0] == 10.0;
    hits10 += set.state(1)[0] == 10.0;
  }
  double freq = hits10 / double(2 * reps);
  CHECK(std::abs(freq - 0.5) < 3.0 * std::sqrt(0.25 / (2 * reps)));
}

TEST_CASE("adjust_weights hand examples") {
  std::vector<double> w{0.45, 0.45, 0.05, 0.05};
  std::vector<std::uint32_t> a{0, 0, 1, 1};
  auto part = make_partition(a, 2, w);  // v = [0.9, 0.1], sizes [2, 2]
  double raw_total = 0.0;
  auto adj = adjust_weights(part, 4, &raw_total);
  CHECK(raw_total == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(adj[0] == doctest::Approx(0.45));
  CHECK(adj[1] == doctest::Approx(0.45));
  CHECK(adj[2] == doctest::Approx(0.05));
  CHECK(adj[3] == doctest::Approx(0.05));

  // v_j = |C_j|/N reduces to uniform
  std::vector<double> unif{0.25, 0.25, 0.25, 0.25};
  auto part_u = make_partition(a, 2, unif);
  auto adj_u = adjust_weights(part_u, 4);
  for (double x : adj_u) CHECK(x == doctest::Approx(0.25));

  // single cluster reduces to uniform no matter the weights
  std::vector<std::uint32_t> one{0, 0, 0, 0};
  auto part_1 = make_partition(one, 1, w);
  auto adj_1 = adjust_weights(part_1, 4);
  for (double x : adj_1) CHECK(x == doctest::Approx(0.25));

  // per-cluster mass is preserved exactly
  double c0 = adj[0] + adj[1], c1 = adj[2] + adj[3];
  CHECK(c0 == doctest::Approx(part.cumulative_weights[0]).epsilon(1e-15));
  CHECK(c1 == doctest::Approx(part.cumulative_weights[1]).epsilon(1e-15));

  // under-weighted large cluster: every member strictly below 1/N
  std::vector<double> skew{0.8, 0.1, 0.06, 0.04};
  std::vector<std::uint32_t> a2{0, 1, 1, 1};
  auto part_s = make_partition(a2, 2, skew);
  auto adj_s = adjust_weights(part_s, 4);
  CHECK(part_s.cumulative_weights[1] < 3.0 / 4.0);
  for (int i = 1; i < 4; ++i) CHECK(adj_s[i] < 0.25);
}

TEST_CASE("cluster_kl values") {
  std::vector<std::size_t> sizes{2, 2};
  std::vector<double> balanced{0.5, 0.5};
  CHECK(cluster_kl(balanced, sizes, 4) == doctest::Approx(0.0).epsilon(1e-15));

  std::vector<double> v{0.9, 0.1};
  double expect = 0.9 * std::log(1.8) + 0.1 * std::log(0.2);
  CHECK(cluster_kl(v, sizes, 4) == doctest::Approx(0.3681).epsilon(1e-3));
  CHECK(cluster_kl(v, sizes, 4) == doctest::Approx(expect).epsilon(1e-14));

  // v -> [1, 0] with sizes [1, N-1] approaches ln N
  const std::size_t n = 1000;
  std::vector<std::size_t> sz{1, n - 1};
  double eps = 1e-12;
  std::vector<double> vv{1.0 - eps, eps};
  CHECK(cluster_kl(vv, sz, n) == doctest::Approx(std::log(double(n))).epsilon(1e-9));

  // never meaningfully negative (zero-weight floor)
  std::vector<double> zero{1.0, 0.0};
  CHECK(cluster_kl(zero, sizes, 4) > -1e-300);
  CHECK(cluster_kl(zero, sizes, 4) < 1.0);
}

TEST_CASE("expectation preserved by sub-resample plus weight adjustment") {
  // Prop. 1 at unit scale: fixed particles, fixed partition; Monte Carlo
  // over the sub-resampling randomness only.
  RngStream gen(33);
  const std::size_t n = 40;
  std::vector<double> states(n), raw(n);
  for (auto& s : states) s = gen.normal(0.0, 2.0);
  for (auto& w : raw) w = gen.u01();
  auto weights = normalize_weights(raw);

  std::vector<std::uint32_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) assign[i] = i % 3;
  auto part = make_partition(assign, 3, weights);

  double pre_mean = 0.0, pre_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pre_mean += weights[i] * states[i];
    pre_sq += weights[i] * states[i] * states[i];
  }

  const int reps = 60000;
  double acc_mean = 0.0, acc_sq = 0.0, var_mean = 0.0, var_sq = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    auto set = make_set(states, weights);
    RngStream rng(9000 + rep);
    within_cluster_resample(set, part, weights, rng);
    auto adj = adjust_weights(part, n);
    double m = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m += adj[i] * set.state(i)[0];
      sq += adj[i] * set.state(i)[0] * set.state(i)[0];
    }
    acc_mean += m;
    acc_sq += sq;
    var_mean += (m - pre_mean) * (m - pre_mean);
    var_sq += (sq - pre_sq) * (sq - pre_sq);
  }
  acc_mean /= reps;
  acc_sq /= reps;
  double se_mean = std::sqrt(var_mean / reps / reps);
  double se_sq = std::sqrt(var_sq / reps / reps);
  CHECK(std::abs(acc_mean - pre_mean) < 4.0 * se_mean);
  CHECK(std::abs(acc_sq - pre_sq) < 4.0 * se_sq);
}

TEST_CASE("weight_adjust skips clustering above the ESS threshold") {
  FlatLikelihoodModel model;
  FilterConfig cfg{50, 0.5, 3};
  RngStream init_rng(12);
  auto set_a = init_particles(model, 50, init_rng);
  RngStream init_rng2(12);
  auto set_b = init_particles(model, 50, init_rng2);

  Matrix obs(1, 1);
  KMeansClusterer km;
  RngStream step_a(77), step_b(77);
  auto diag_cbf = weight_adjust(set_a, model, obs, km, 5, cfg, step_a);
  auto diag_bf = bf_step(set_b, model, obs, cfg, step_b);
  CHECK_FALSE(diag_cbf.resampled);
  CHECK(diag_cbf.n_clusters == 0);
  CHECK(std::isnan(diag_cbf.cluster_kl));
  CHECK(diag_cbf.ess_pre == diag_bf.ess_pre);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(set_a.state(i)[0] == set_b.state(i)[0]);
    CHECK(set_a.weights()[i] == set_b.weights()[i]);
  }
}

TEST_CASE("weight_adjust with one cluster behaves like plain resampling") {
  SharpObsModel model;
  FilterConfig cfg{120, 0.5, 4};
  RngStream init_rng(21);
  auto set = init_particles(model, 120, init_rng);
  Matrix obs(1, 1);
  obs(0, 0) = set.state(3)[0];
  SingleClusterer single;
  RngStream step(31);
  auto diag = weight_adjust(set, model, obs, single, 1, cfg, step);
  CHECK(diag.resampled);
  CHECK(diag.n_clusters == 1);
  CHECK(diag.cluster_kl == doctest::Approx(0.0).epsilon(1e-12));
  for (double w : set.weights()) CHECK(w == doctest::Approx(1.0 / 120));
}

TEST_CASE("weight_adjust fires clustering below threshold and records kl") {
  SharpObsModel model;
  FilterConfig cfg{200, 0.5, 5};
  RngStream init_rng(22);
  auto set = init_particles(model, 200, init_rng);
  Matrix obs(1, 1);
  obs(0, 0) = set.state(11)[0];
  KMeansClusterer km;
  RngStream step(41);
  auto diag = weight_adjust(set, model, obs, km, 6, cfg, step);
  CHECK(diag.resampled);
  CHECK(diag.n_clusters >= 1);
  CHECK(diag.n_clusters <= 6);
  CHECK(diag.cluster_kl >= -1e-12);
  CHECK(diag.raw_weight_scale == doctest::Approx(200.0).epsilon(1e-9));

  // adjusted weights sum to one and per-cluster mass is conserved
  double total = 0.0;
  for (double w : set.weights()) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("run_cbf is deterministic and reduces to run_filter in law") {
  LinearGaussianModel model;
  RngStream sim(55);
  Matrix obs(10, 1);
  double x = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    x = model.a * x + sim.normal(0.0, std::sqrt(model.q));
    obs(t, 0) = x + sim.normal(0.0, std::sqrt(model.r));
  }
  KMeansClusterer km;
  FilterConfig cfg{300, 0.5, 91};
  auto a = run_cbf(model, obs, km, 4, cfg);
  auto b = run_cbf(model, obs, km, 4, cfg);
  CHECK(a.step_means.data == b.step_means.data);
  CHECK(a.diagnostics.size() == 10);

  // k=1: same law as the plain filter; posterior means should agree within
  // Monte-Carlo error across seeds
  SingleClusterer single;
  double cbf_avg = 0.0, bf_avg = 0.0;
  const int n_seeds = 20;
  for (int s = 0; s < n_seeds; ++s) {
    FilterConfig c2{300, 0.5, std::uint64_t(1000 + s)};
    auto cbf = run_cbf(model, obs, single, 1, c2);
    auto bf = run_filter(model, obs, c2);
    cbf_avg += cbf.step_means(9, 0) / n_seeds;
    bf_avg += bf.step_means(9, 0) / n_seeds;
  }
  auto exact = kalman_filter(model, obs);
  CHECK(std::abs(cbf_avg - exact.means[9]) < 0.15);
  CHECK(std::abs(bf_avg - exact.means[9]) < 0.15);
}
