#pragma once

#include <functional>

#include "smc/state_model.hpp"

namespace smc {

// One-particle weight recursion: log w_t = log w_{t-1} + log p(y_t|x_t)
// + log p(x_t|x_{t-1}) - log q(x_t|...); the last two cancel for bootstrap
// models. Throws InvalidModelError if any density is NaN.
double sis_log_weight_update(double log_w_prev, const StateSpaceModel& model,
                             std::span<const double> prev,
                             std::span<const double> proposed,
                             const Matrix& obs_history);

// One bootstrap-filter step: propose, reweight, resample when the effective
// sample size drops below the configured fraction of N. obs_history holds
// y_1..y_t (current last). rng should be a per-step stream; particle i draws
// from rng.substream(i), the resampler from rng.substream(N).
StepDiagnostics bf_step(WeightedParticleSet& set, const StateSpaceModel& model,
                        const Matrix& obs_history, const FilterConfig& config,
                        RngStream& rng);

using StepObserver =
    std::function<void(const WeightedParticleSet&, const StepDiagnostics&)>;

// Full filter over observations (one row per time step). Observer, when set,
// runs after every step.
FilterOutput run_filter(const StateSpaceModel& model,
                        const Matrix& observations, const FilterConfig& config,
                        const StepObserver& observer = {});

// Shared by both filters: propose new states and apply the Eq.-style weight
// recursion in log space, then normalize. Returns pre-resample ESS.
double propose_and_reweight(WeightedParticleSet& set,
                            const StateSpaceModel& model,
                            const Matrix& obs_history, RngStream& rng);

// Fills a fresh particle set from the model's initial distribution.
WeightedParticleSet init_particles(const StateSpaceModel& model,
                                   std::size_t n, RngStream& rng);

double weight_variance(std::span<const double> weights);

}  // namespace smc
