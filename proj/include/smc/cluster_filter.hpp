#pragma once

#include <memory>

#include "smc/bootstrap.hpp"
#include "smc/state_model.hpp"

namespace smc {

// Partition of the current particle population. Built by make_partition,
// which drops empty clusters and remaps indices to keep them dense.
struct ClusterPartition {
  std::vector<std::uint32_t> assignments;  // per particle, in [0, k)
  std::size_t k = 0;
  std::vector<std::size_t> sizes;          // |C_j| > 0 for every j
  std::vector<double> cumulative_weights;  // v_j, sums to 1
};

// Pluggable clustering backend; the accuracy of the clustering does not
// affect correctness of the weight adjustment, only its usefulness.
class Clusterer {
 public:
  virtual ~Clusterer() = default;
  virtual std::vector<std::uint32_t> cluster(const Matrix& points,
                                             std::size_t k,
                                             RngStream& rng) const = 0;
};

// Default backend: k-means++ seeding followed by capped Lloyd iterations.
class KMeansClusterer : public Clusterer {
 public:
  explicit KMeansClusterer(std::size_t max_iter = 50) : max_iter_(max_iter) {}
  std::vector<std::uint32_t> cluster(const Matrix& points, std::size_t k,
                                     RngStream& rng) const override;

 private:
  std::size_t max_iter_;
};

// v_j = sum of member weights per cluster (clusters as given; an empty
// cluster yields v_j = 0).
std::vector<double> cumulative_cluster_weights(
    std::span<const double> weights, std::span<const std::uint32_t> assignments,
    std::size_t k);

// Drops empty clusters, remaps assignment indices, records sizes and v_j.
ClusterPartition make_partition(std::span<const std::uint32_t> assignments,
                                std::size_t k, std::span<const double> weights);

// Sub-resamples exactly |C_j| particles inside each cluster with
// probabilities w_i / v_j (uniform within a cluster whose weight is all
// zero). Output is grouped by cluster; returns the source cluster of each
// output slot. Cluster j draws from rng.substream(j).
std::vector<std::uint32_t> within_cluster_resample(
    WeightedParticleSet& set, const ClusterPartition& partition,
    std::span<const double> weights, RngStream& rng);

// Per-particle adjusted weights for the grouped output of
// within_cluster_resample: raw weight v_j/(|C_j|/N) normalized to v_j/|C_j|.
// raw_total_out, when given, receives the raw sum (N by construction).
std::vector<double> adjust_weights(const ClusterPartition& partition,
                                   std::size_t n,
                                   double* raw_total_out = nullptr);

// KL divergence between the adjusted and the weighted posterior:
// sum_j v_j ln(v_j / (|C_j|/N)). Zero cluster weights are floored at the
// smallest positive normal double.
double cluster_kl(std::span<const double> v, std::span<const std::size_t> sizes,
                  std::size_t n);

// One clustering-filter step: propose, reweight, and when ESS drops below
// the threshold cluster the current states, sub-resample within clusters,
// and assign adjusted weights.
StepDiagnostics weight_adjust(WeightedParticleSet& set,
                              const StateSpaceModel& model,
                              const Matrix& obs_history,
                              const Clusterer& clusterer, std::size_t k,
                              const FilterConfig& config, RngStream& rng);

// Full clustering-based filter; same layout as run_filter.
FilterOutput run_cbf(const StateSpaceModel& model, const Matrix& observations,
                     const Clusterer& clusterer, std::size_t k,
                     const FilterConfig& config,
                     const StepObserver& observer = {});

}  // namespace smc
