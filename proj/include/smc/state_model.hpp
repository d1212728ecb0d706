#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "smc/matrix.hpp"
#include "smc/particle.hpp"
#include "smc/rng.hpp"

namespace smc {

// Generic state-space model. obs_history carries y_1..y_t with the current
// observation in the last row; bootstrap models ignore everything but that
// last row, the tracking model reads its control input from it.
class StateSpaceModel {
 public:
  virtual ~StateSpaceModel() = default;

  virtual std::size_t state_dim() const = 0;

  virtual void sample_initial(std::span<double> out, RngStream& rng) const = 0;

  // Draw x_t given x_{t-1}; for the bootstrap choice this samples the
  // transition kernel.
  virtual void sample_proposal(std::span<const double> prev,
                               const Matrix& obs_history, std::span<double> out,
                               RngStream& rng) const = 0;

  virtual double log_transition(std::span<const double> prev,
                                std::span<const double> next,
                                const Matrix& obs_history) const = 0;

  virtual double log_observation(std::span<const double> obs,
                                 std::span<const double> state) const = 0;

  // Defaults to the transition density (bootstrap proposal).
  virtual double log_proposal(std::span<const double> prev,
                              std::span<const double> next,
                              const Matrix& obs_history) const {
    return log_transition(prev, next, obs_history);
  }

  // When true the weight update skips the transition/proposal terms, which
  // cancel exactly.
  virtual bool bootstrap_proposal() const { return true; }
};

struct FilterConfig {
  std::size_t n_particles = 1000;
  double ess_threshold_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct StepDiagnostics {
  int t = 0;
  double ess_pre = 0.0;  // ESS after the weight update, before resampling
  bool resampled = false;
  std::size_t unique_count = 0;
  std::size_t n_clusters = 0;  // 0 when no clustering happened this step
  double cluster_kl = std::numeric_limits<double>::quiet_NaN();
  double raw_weight_scale = std::numeric_limits<double>::quiet_NaN();
  double weight_variance = 0.0;
};

struct FilterOutput {
  WeightedParticleSet set;  // state after the last step
  std::vector<StepDiagnostics> diagnostics;
  Matrix step_means;  // T x d posterior mean per step
};

}  // namespace smc
