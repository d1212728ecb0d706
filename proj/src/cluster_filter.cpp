#include "smc/cluster_filter.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <stdexcept>

#include "smc/errors.hpp"
#include "smc/kmeans.hpp"

namespace smc {

std::vector<std::uint32_t> KMeansClusterer::cluster(const Matrix& points,
                                                    std::size_t k,
                                                    RngStream& rng) const {
  std::size_t k_eff = std::min(k, points.rows);
  Matrix init = kmeanspp_init(points, k_eff, rng);
  return lloyd(points, init, max_iter_, 1e-9).assignments;
}

std::vector<double> cumulative_cluster_weights(
    std::span<const double> weights, std::span<const std::uint32_t> assignments,
    std::size_t k) {
  std::vector<double> v(k, 0.0);
  for (std::size_t i = 0; i < assignments.size(); ++i)
    v[assignments[i]] += weights[i];
  return v;
}

ClusterPartition make_partition(std::span<const std::uint32_t> assignments,
                                std::size_t k,
                                std::span<const double> weights) {
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assignments) {
    if (a >= k) throw std::invalid_argument("assignment out of range");
    ++counts[a];
  }
  std::vector<std::uint32_t> remap(k, 0);
  std::size_t dense = 0;
  for (std::size_t j = 0; j < k; ++j) {
    remap[j] = static_cast<std::uint32_t>(dense);
    if (counts[j] > 0) ++dense;
  }
  ClusterPartition part;
  part.k = dense;
  part.assignments.resize(assignments.size());
  for (std::size_t i = 0; i < assignments.size(); ++i)
    part.assignments[i] = remap[assignments[i]];
  part.sizes.assign(dense, 0);
  for (auto a : part.assignments) ++part.sizes[a];
  part.cumulative_weights =
      cumulative_cluster_weights(weights, part.assignments, dense);
  return part;
}

std::vector<std::uint32_t> within_cluster_resample(
    WeightedParticleSet& set, const ClusterPartition& partition,
    std::span<const double> weights, RngStream& rng) {
  const std::size_t n = set.count();
  std::vector<std::vector<std::uint32_t>> members(partition.k);
  for (std::size_t j = 0; j < partition.k; ++j)
    members[j].reserve(partition.sizes[j]);
  for (std::size_t i = 0; i < n; ++i)
    members[partition.assignments[i]].push_back(
        static_cast<std::uint32_t>(i));

  std::vector<std::uint32_t> picks;
  std::vector<std::uint32_t> source;
  picks.reserve(n);
  source.reserve(n);
  for (std::size_t j = 0; j < partition.k; ++j) {
    RngStream sub = rng.substream(j);
    const auto& mem = members[j];
    std::vector<double> cdf(mem.size());
    double acc = 0.0;
    for (std::size_t m = 0; m < mem.size(); ++m) {
      acc += weights[mem[m]];
      cdf[m] = acc;
    }
    if (acc <= 0.0) {
      // all member weights are exactly zero: uniform within the cluster
      for (std::size_t m = 0; m < mem.size(); ++m) cdf[m] = double(m + 1);
    }
    for (std::size_t draw = 0; draw < mem.size(); ++draw) {
      picks.push_back(mem[sub.sample_cdf(cdf)]);
      source.push_back(static_cast<std::uint32_t>(j));
    }
  }
  set.select(picks);
  return source;
}

std::vector<double> adjust_weights(const ClusterPartition& partition,
                                   std::size_t n, double* raw_total_out) {
  std::vector<double> out;
  out.reserve(n);
  double raw_total = 0.0;
  for (std::size_t j = 0; j < partition.k; ++j) {
    double raw =
        partition.cumulative_weights[j] /
        (double(partition.sizes[j]) / double(n));  // v_j / (|C_j|/N)
    for (std::size_t m = 0; m < partition.sizes[j]; ++m) {
      out.push_back(raw);
      raw_total += raw;
    }
  }
  if (raw_total_out) *raw_total_out = raw_total;
  for (auto& w : out) w /= raw_total;
  return out;
}

double cluster_kl(std::span<const double> v,
                  std::span<const std::size_t> sizes, std::size_t n) {
  double kl = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) {
    double vj = std::max(v[j], DBL_MIN);
    kl += vj * std::log(vj * double(n) / double(sizes[j]));
  }
  return kl;
}

StepDiagnostics weight_adjust(WeightedParticleSet& set,
                              const StateSpaceModel& model,
                              const Matrix& obs_history,
                              const Clusterer& clusterer, std::size_t k,
                              const FilterConfig& config, RngStream& rng) {
  const std::size_t n = set.count();
  StepDiagnostics diag;
  diag.t = static_cast<int>(obs_history.rows);
  diag.ess_pre = propose_and_reweight(set, model, obs_history, rng);
  if (diag.ess_pre < config.ess_threshold_fraction * double(n)) {
    Matrix states(n, set.dim());
    for (std::size_t i = 0; i < n; ++i) {
      auto s = set.state(i);
      std::copy(s.begin(), s.end(), states.row(i).begin());
    }
    std::vector<double> weights(set.weights().begin(), set.weights().end());

    RngStream cluster_rng = rng.substream(n + 1);
    auto raw_assign = clusterer.cluster(states, k, cluster_rng);
    ClusterPartition part = make_partition(raw_assign, k, weights);

    RngStream resample_rng = rng.substream(n + 2);
    within_cluster_resample(set, part, weights, resample_rng);
    double raw_total = 0.0;
    auto adjusted = adjust_weights(part, n, &raw_total);
    std::copy(adjusted.begin(), adjusted.end(), set.weights().begin());

    diag.resampled = true;
    diag.n_clusters = part.k;
    diag.cluster_kl = cluster_kl(part.cumulative_weights, part.sizes, n);
    diag.raw_weight_scale = raw_total;
  }
  diag.unique_count = set.unique_count();
  diag.weight_variance = weight_variance(set.weights());
  return diag;
}

FilterOutput run_cbf(const StateSpaceModel& model, const Matrix& observations,
                     const Clusterer& clusterer, std::size_t k,
                     const FilterConfig& config, const StepObserver& observer) {
  RngStream base(config.seed);
  RngStream init_rng = base.substream(0);
  FilterOutput out{init_particles(model, config.n_particles, init_rng),
                   {},
                   Matrix(observations.rows, model.state_dim())};
  for (std::size_t t = 1; t <= observations.rows; ++t) {
    Matrix obs_history(t, observations.cols);
    std::copy(observations.data.begin(),
              observations.data.begin() + t * observations.cols,
              obs_history.data.begin());
    RngStream step_rng = base.substream(t);
    StepDiagnostics diag = weight_adjust(out.set, model, obs_history,
                                         clusterer, k, config, step_rng);
    auto mean = posterior_mean(out.set);
    std::copy(mean.begin(), mean.end(), out.step_means.row(t - 1).begin());
    if (observer) observer(out.set, diag);
    out.diagnostics.push_back(diag);
  }
  return out;
}

}  // namespace smc
