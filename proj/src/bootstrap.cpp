#include "smc/bootstrap.hpp"

#include <cmath>
#include <stdexcept>

#include "smc/errors.hpp"

namespace smc {

double sis_log_weight_update(double log_w_prev, const StateSpaceModel& model,
                             std::span<const double> prev,
                             std::span<const double> proposed,
                             const Matrix& obs_history) {
  auto obs = obs_history.row(obs_history.rows - 1);
  double inc = model.log_observation(obs, proposed);
  if (!model.bootstrap_proposal()) {
    inc += model.log_transition(prev, proposed, obs_history) -
           model.log_proposal(prev, proposed, obs_history);
  }
  if (std::isnan(inc))
    throw InvalidModelError("model density produced NaN in weight update");
  return log_w_prev + inc;
}

WeightedParticleSet init_particles(const StateSpaceModel& model, std::size_t n,
                                   RngStream& rng) {
  if (n < 2) throw std::invalid_argument("n_particles must be >= 2");
  WeightedParticleSet set(n, model.state_dim());
  for (std::size_t i = 0; i < n; ++i) {
    RngStream sub = rng.substream(i);
    model.sample_initial(set.state(i), sub);
  }
  return set;
}

double propose_and_reweight(WeightedParticleSet& set,
                            const StateSpaceModel& model,
                            const Matrix& obs_history, RngStream& rng) {
  const std::size_t n = set.count();
  Matrix prev_states(n, set.dim());
  for (std::size_t i = 0; i < n; ++i) {
    auto s = set.state(i);
    std::copy(s.begin(), s.end(), prev_states.row(i).begin());
  }
  set.advance([&](std::size_t i, std::span<const double> prev,
                  std::span<double> next) {
    RngStream sub = rng.substream(i);
    model.sample_proposal(prev, obs_history, next, sub);
  });
  std::vector<double> log_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    log_w[i] = sis_log_weight_update(std::log(set.weights()[i]), model,
                                     prev_states.row(i), set.state(i),
                                     obs_history);
  }
  auto w = normalize_log_weights(log_w);
  std::copy(w.begin(), w.end(), set.weights().begin());
  return effective_sample_size(set.weights());
}

double weight_variance(std::span<const double> weights) {
  double mean = 0.0;
  for (double w : weights) mean += w;
  mean /= double(weights.size());
  double var = 0.0;
  for (double w : weights) var += (w - mean) * (w - mean);
  return var / double(weights.size());
}

StepDiagnostics bf_step(WeightedParticleSet& set, const StateSpaceModel& model,
                        const Matrix& obs_history, const FilterConfig& config,
                        RngStream& rng) {
  StepDiagnostics diag;
  diag.t = static_cast<int>(obs_history.rows);
  diag.ess_pre = propose_and_reweight(set, model, obs_history, rng);
  if (diag.ess_pre <
      config.ess_threshold_fraction * double(set.count())) {
    RngStream resample_rng = rng.substream(set.count());
    multinomial_resample(set, resample_rng);
    diag.resampled = true;
  }
  diag.unique_count = set.unique_count();
  diag.weight_variance = weight_variance(set.weights());
  return diag;
}

FilterOutput run_filter(const StateSpaceModel& model,
                        const Matrix& observations, const FilterConfig& config,
                        const StepObserver& observer) {
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
    StepDiagnostics diag =
        bf_step(out.set, model, obs_history, config, step_rng);
    auto mean = posterior_mean(out.set);
    std::copy(mean.begin(), mean.end(), out.step_means.row(t - 1).begin());
    if (observer) observer(out.set, diag);
    out.diagnostics.push_back(diag);
  }
  return out;
}

}  // namespace smc
