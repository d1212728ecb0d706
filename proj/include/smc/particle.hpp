#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "smc/matrix.hpp"
#include "smc/rng.hpp"

namespace smc {

// Weighted particle population at time t with full trajectory access.
//
// Trajectories are stored as per-step state layers plus ancestor links, so a
// resample costs O(N d) instead of O(N t d). layer(t) holds the states at
// time t; parent links in layer t point into layer t-1. The current states
// are the top layer.
class WeightedParticleSet {
 public:
  WeightedParticleSet(std::size_t count, std::size_t dim);

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  int time_index() const { return static_cast<int>(layers_.size()) - 1; }

  std::span<double> state(std::size_t i) { return top().states.row(i); }
  std::span<const double> state(std::size_t i) const {
    return top_const().states.row(i);
  }

  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  // Appends a new time layer; `propose` fills the state for particle i from
  // its predecessor. Weights are left untouched.
  void advance(
      const std::function<void(std::size_t i, std::span<const double> prev,
                               std::span<double> next)>& propose);

  // Replaces the current layer with the selected ancestors (trajectories
  // follow) and resets weights to uniform.
  void select(std::span<const std::uint32_t> indices);

  // Materializes the full path of particle i as a (t+1) x dim matrix.
  Matrix trajectory(std::size_t i) const;

  // Number of bitwise-distinct current states.
  std::size_t unique_count() const;

  void set_uniform_weights();

 private:
  struct Layer {
    Matrix states;
    std::vector<std::uint32_t> parent;  // empty for layer 0
  };
  Layer& top() { return layers_.back(); }
  const Layer& top_const() const { return layers_.back(); }

  std::size_t count_;
  std::size_t dim_;
  std::vector<double> weights_;
  std::vector<Layer> layers_;
};

// raw -> raw/sum(raw). Throws DegenerateWeightsError when the input has no
// positive mass or contains a non-finite entry.
std::vector<double> normalize_weights(std::span<const double> raw);

// Max-shifted exp-normalization of log weights. -inf entries are kept (they
// normalize to 0); all -inf or any NaN throws DegenerateWeightsError.
std::vector<double> normalize_log_weights(std::span<const double> log_w);

// 1 / sum(w^2) for normalized weights; lies in [1, N].
double effective_sample_size(std::span<const double> weights);

// i.i.d. multinomial draws from the weighted empirical distribution.
std::vector<std::uint32_t> multinomial_draw(std::span<const double> weights,
                                            std::size_t n, RngStream& rng);

// Resamples the whole set (trajectories included); output weights uniform.
void multinomial_resample(WeightedParticleSet& set, RngStream& rng);

// sum_i w_i f(x_i) over current states.
double empirical_expectation(
    const WeightedParticleSet& set,
    const std::function<double(std::span<const double>)>& f);

std::vector<double> empirical_expectation(
    const WeightedParticleSet& set, std::size_t out_dim,
    const std::function<void(std::span<const double>, std::span<double>)>& f);

// Trajectory-reading variant: f sees the set and a particle index.
double empirical_expectation_traj(
    const WeightedParticleSet& set,
    const std::function<double(const WeightedParticleSet&, std::size_t)>& f);

// Weighted mean of the current states.
std::vector<double> posterior_mean(const WeightedParticleSet& set);

}  // namespace smc
