#include "smc/particle.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "smc/errors.hpp"

namespace smc {

WeightedParticleSet::WeightedParticleSet(std::size_t count, std::size_t dim)
    : count_(count), dim_(dim), weights_(count, 1.0 / double(count)) {
  layers_.push_back(Layer{Matrix(count, dim), {}});
}

void WeightedParticleSet::advance(
    const std::function<void(std::size_t, std::span<const double>,
                             std::span<double>)>& propose) {
  Layer next{Matrix(count_, dim_), std::vector<std::uint32_t>(count_)};
  const Layer& prev = layers_.back();
  for (std::size_t i = 0; i < count_; ++i) {
    next.parent[i] = static_cast<std::uint32_t>(i);
    propose(i, prev.states.row(i), next.states.row(i));
  }
  layers_.push_back(std::move(next));
}

void WeightedParticleSet::select(std::span<const std::uint32_t> indices) {
  Layer& cur = layers_.back();
  Layer picked{Matrix(count_, dim_), {}};
  if (!cur.parent.empty()) picked.parent.resize(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    std::uint32_t a = indices[i];
    auto src = cur.states.row(a);
    std::copy(src.begin(), src.end(), picked.states.row(i).begin());
    if (!cur.parent.empty()) picked.parent[i] = cur.parent[a];
  }
  layers_.back() = std::move(picked);
  set_uniform_weights();
}

Matrix WeightedParticleSet::trajectory(std::size_t i) const {
  Matrix path(layers_.size(), dim_);
  std::size_t idx = i;
  for (std::size_t t = layers_.size(); t-- > 0;) {
    auto src = layers_[t].states.row(idx);
    std::copy(src.begin(), src.end(), path.row(t).begin());
    if (t > 0) idx = layers_[t].parent[idx];
  }
  return path;
}

std::size_t WeightedParticleSet::unique_count() const {
  const Matrix& s = top_const().states;
  std::vector<std::uint32_t> order(count_);
  std::iota(order.begin(), order.end(), 0u);
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    return std::lexicographical_compare(s.row(a).begin(), s.row(a).end(),
                                        s.row(b).begin(), s.row(b).end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = count_ ? 1 : 0;
  for (std::size_t i = 1; i < count_; ++i) {
    if (std::memcmp(s.row(order[i - 1]).data(), s.row(order[i]).data(),
                    dim_ * sizeof(double)) != 0)
      ++distinct;
  }
  return distinct;
}

void WeightedParticleSet::set_uniform_weights() {
  std::fill(weights_.begin(), weights_.end(), 1.0 / double(count_));
}

std::vector<double> normalize_weights(std::span<const double> raw) {
  double total = 0.0;
  for (double w : raw) {
    if (!std::isfinite(w) || w < 0.0)
      throw DegenerateWeightsError("non-finite or negative raw weight");
    total += w;
  }
  if (total <= 0.0)
    throw DegenerateWeightsError("all raw weights are zero");
  std::vector<double> out(raw.begin(), raw.end());
  for (double& w : out) w /= total;
  return out;
}

std::vector<double> normalize_log_weights(std::span<const double> log_w) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : log_w) {
    if (std::isnan(lw)) throw DegenerateWeightsError("NaN log weight");
    mx = std::max(mx, lw);
  }
  if (!std::isfinite(mx))
    throw DegenerateWeightsError("all log weights are -inf");
  std::vector<double> out(log_w.size());
  double total = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    out[i] = std::exp(log_w[i] - mx);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

double effective_sample_size(std::span<const double> weights) {
  double s2 = 0.0;
  for (double w : weights) s2 += w * w;
  return 1.0 / s2;
}

std::vector<std::uint32_t> multinomial_draw(std::span<const double> weights,
                                            std::size_t n, RngStream& rng) {
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  std::vector<std::uint32_t> out(n);
  for (std::size_t m = 0; m < n; ++m)
    out[m] = static_cast<std::uint32_t>(rng.sample_cdf(cdf));
  return out;
}

void multinomial_resample(WeightedParticleSet& set, RngStream& rng) {
  auto idx = multinomial_draw(set.weights(), set.count(), rng);
  set.select(idx);
}

double empirical_expectation(
    const WeightedParticleSet& set,
    const std::function<double(std::span<const double>)>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < set.count(); ++i)
    acc += set.weights()[i] * f(set.state(i));
  return acc;
}

std::vector<double> empirical_expectation(
    const WeightedParticleSet& set, std::size_t out_dim,
    const std::function<void(std::span<const double>, std::span<double>)>& f) {
  std::vector<double> acc(out_dim, 0.0);
  std::vector<double> tmp(out_dim);
  for (std::size_t i = 0; i < set.count(); ++i) {
    f(set.state(i), tmp);
    for (std::size_t j = 0; j < out_dim; ++j)
      acc[j] += set.weights()[i] * tmp[j];
  }
  return acc;
}

double empirical_expectation_traj(
    const WeightedParticleSet& set,
    const std::function<double(const WeightedParticleSet&, std::size_t)>& f) {
  double acc = 0.0;
  for (std::size_t i = 0; i < set.count(); ++i)
    acc += set.weights()[i] * f(set, i);
  return acc;
}

std::vector<double> posterior_mean(const WeightedParticleSet& set) {
  std::vector<double> mean(set.dim(), 0.0);
  for (std::size_t i = 0; i < set.count(); ++i) {
    auto s = set.state(i);
    for (std::size_t j = 0; j < set.dim(); ++j)
      mean[j] += set.weights()[i] * s[j];
  }
  return mean;
}

}  // namespace smc
