#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "smc/matrix.hpp"
#include "smc/rng.hpp"

namespace smc {

// Priors for the subspace clustering model
//   theta ~ Beta(a_theta, b_theta)      relevance probability
//   eta ~ IG(a_eta, b_eta)              shift-to-noise variance ratio
//   sigma_m^2 ~ IG(a_sigma, b_sigma)    per-dimension noise
//   mu_m ~ N(m, v)                      global mean
//   r_m^j ~ Ber(theta), b_m^j ~ N(0, eta sigma_m^2), z_i ~ Cat(Dir(alpha))
//   x_i = mu + r^{z_i} .* b^{z_i} + eps_i,  eps_i ~ N(0, diag(sigma^2))
struct SubspaceHypers {
  double a_theta = 2.0;
  double b_theta = 2.0;
  double a_eta = 6.0;
  double b_eta = 5.0;
  double alpha = 1.5;  // symmetric Dirichlet concentration
  double m = 0.0;
  double v = 1.0;
  double a_sigma = 6.0;
  double b_sigma = 5.0;
  std::size_t k = 2;
  std::size_t d = 2;
};

struct SubspaceState {
  std::vector<std::uint32_t> z;  // N labels in [0, k)
  Matrix r;                      // k x d, 0/1
  Matrix b;                      // k x d
  std::vector<double> mu;        // d
  std::vector<double> sigma2;    // d, positive
  double theta = 0.5;
  double eta = 1.0;
};

struct GibbsOptions {
  bool printed_lambda = false;  // use the paper's printed closed form
  bool clamp_r_one = false;     // pin every r to 1 (plain mixture reduction)
  // The freeze switches hold individual hyperparameters fixed so a chain can
  // be compared against simpler reference samplers.
  bool update_mu = true;
  bool update_sigma2 = true;
  bool update_theta = true;
  bool update_eta = true;
};

// log of the marginal density ratio
//   N(x | mu 1, sigma2 (I + eta 11')) / N(x | mu 1, sigma2 I)
// via Det(aI + b11') = a^n + n a^{n-1} b and the rank-1 Woodbury inverse.
double log_lambda_ratio(std::span<const double> x_col, double mu_m,
                        double sigma2_m, double eta);
double lambda_ratio(std::span<const double> x_col, double mu_m,
                    double sigma2_m, double eta);

// The appendix's printed variant of the same quantity (kept for comparison;
// its exponent sums squared deviations instead of squaring the sum).
double log_lambda_ratio_printed(std::span<const double> x_col, double mu_m,
                                double sigma2_m, double eta);

// Normalized conditional p(z_i = j | everything else, r and b integrated
// out), j = 0..k-1.
std::vector<double> z_posterior(std::size_t i, const SubspaceState& state,
                                const Matrix& data,
                                const SubspaceHypers& hypers,
                                const GibbsOptions& options = {});

std::uint32_t sample_z(std::size_t i, const SubspaceState& state,
                       const Matrix& data, const SubspaceHypers& hypers,
                       RngStream& rng, const GibbsOptions& options = {});

// p(r_m^j = 1 | members of cluster j, b integrated out).
double r_posterior(std::size_t j, std::size_t m, const SubspaceState& state,
                   const Matrix& data, const SubspaceHypers& hypers,
                   const GibbsOptions& options = {});

// Draws r_m^j and then b_m^j from its exact conditional given r.
std::pair<int, double> sample_r_b(std::size_t j, std::size_t m,
                                  const SubspaceState& state,
                                  const Matrix& data,
                                  const SubspaceHypers& hypers, RngStream& rng,
                                  const GibbsOptions& options = {});

double sample_mu(std::size_t m, const SubspaceState& state, const Matrix& data,
                 const SubspaceHypers& hypers, RngStream& rng);

double sample_sigma2(std::size_t m, const SubspaceState& state,
                     const Matrix& data, const SubspaceHypers& hypers,
                     RngStream& rng);

double sample_theta(const SubspaceState& state, const SubspaceHypers& hypers,
                    RngStream& rng);

double sample_eta(const SubspaceState& state, const SubspaceHypers& hypers,
                  RngStream& rng);

// One full sweep in the fixed order: z for all i, (r, b) for all (j, m),
// mu for all m, sigma2 for all m, theta, eta.
void gibbs_sweep(SubspaceState& state, const Matrix& data,
                 const SubspaceHypers& hypers, RngStream& rng,
                 const GibbsOptions& options = {});

struct ForwardSample {
  SubspaceState state;
  Matrix data;  // N x d
};

// Draws a full (state, data) pair from the generative model. The mixing
// vector pi is drawn from Dir(alpha), used for the labels, and discarded.
ForwardSample forward_sample(const SubspaceHypers& hypers, std::size_t n,
                             RngStream& rng);

// Redraws the data matrix from the observation model given the state.
void redraw_data(const SubspaceState& state, Matrix& data, RngStream& rng);

}  // namespace smc
