#include "smc/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "smc/particle.hpp"

namespace smc {
namespace {

double logaddexp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a + std::log1p(std::exp(b - a));
}

// log lambda from sufficient statistics: member count and sum of (x - mu).
double llr_stats(double n, double s1, double sigma2_m, double eta) {
  if (n == 0.0) return 0.0;
  const double c = 1.0 + n * eta;
  return -0.5 * std::log(c) + (eta / c) * s1 * s1 / (2.0 * sigma2_m);
}

// ln((1 - theta) + theta * lambda) computed from log lambda.
double log_mix(double theta, double log_lambda) {
  return logaddexp(std::log1p(-theta), std::log(theta) + log_lambda);
}

void check_state(const SubspaceState& state, const Matrix& data,
                 const SubspaceHypers& hypers) {
  if (data.cols != hypers.d || state.mu.size() != hypers.d ||
      state.sigma2.size() != hypers.d)
    throw std::invalid_argument("dimension mismatch");
  if (state.r.rows != hypers.k || state.r.cols != hypers.d ||
      state.b.rows != hypers.k || state.b.cols != hypers.d)
    throw std::invalid_argument("relevance shape mismatch");
  if (state.z.size() != data.rows)
    throw std::invalid_argument("label count mismatch");
}

}  // namespace

double log_lambda_ratio(std::span<const double> x_col, double mu_m,
                        double sigma2_m, double eta) {
  double s1 = 0.0;
  for (double x : x_col) s1 += x - mu_m;
  return llr_stats(static_cast<double>(x_col.size()), s1, sigma2_m, eta);
}

double lambda_ratio(std::span<const double> x_col, double mu_m,
                    double sigma2_m, double eta) {
  return std::exp(log_lambda_ratio(x_col, mu_m, sigma2_m, eta));
}

double log_lambda_ratio_printed(std::span<const double> x_col, double mu_m,
                                double sigma2_m, double eta) {
  const double n = static_cast<double>(x_col.size());
  if (n == 0.0) return 0.0;
  double s2 = 0.0;
  for (double x : x_col) s2 += (x - mu_m) * (x - mu_m);
  const double c = 1.0 + n * eta;
  return -0.5 * std::log(c) + (eta / c) * s2 / (2.0 * sigma2_m);
}

std::vector<double> z_posterior(std::size_t i, const SubspaceState& state,
                                const Matrix& data,
                                const SubspaceHypers& hypers,
                                const GibbsOptions& options) {
  check_state(state, data, hypers);
  const std::size_t k = hypers.k;
  const std::size_t d = hypers.d;

  // per-cluster member count and per-dimension deviation sums, excluding i
  std::vector<double> count(k, 0.0);
  Matrix s1(k, d);
  for (std::size_t l = 0; l < data.rows; ++l) {
    if (l == i) continue;
    const std::size_t j = state.z[l];
    count[j] += 1.0;
    for (std::size_t m = 0; m < d; ++m) s1(j, m) += data(l, m) - state.mu[m];
  }

  const bool printed = options.printed_lambda;
  auto lam = [&](double n, double s, std::size_t j, std::size_t m,
                 bool with_i) -> double {
    if (!printed) return llr_stats(n, s, state.sigma2[m], state.eta);
    // printed form needs squared deviations, so gather the hypothetical
    // cluster-j membership (point i included or not) explicitly
    double s2 = 0.0;
    double cnt = 0.0;
    for (std::size_t l = 0; l < data.rows; ++l) {
      const bool member = (l == i) ? with_i : (state.z[l] == j);
      if (!member) continue;
      const double u = data(l, m) - state.mu[m];
      s2 += u * u;
      cnt += 1.0;
    }
    if (cnt == 0.0) return 0.0;
    const double c = 1.0 + cnt * state.eta;
    return -0.5 * std::log(c) + (state.eta / c) * s2 / (2.0 * state.sigma2[m]);
  };

  std::vector<double> log_w(k);
  for (std::size_t j = 0; j < k; ++j) {
    double lw = std::log(count[j] + hypers.alpha);
    for (std::size_t m = 0; m < d; ++m) {
      const double u_i = data(i, m) - state.mu[m];
      const double l_minus = lam(count[j], s1(j, m), j, m, false);
      const double l_plus = lam(count[j] + 1.0, s1(j, m) + u_i, j, m, true);
      if (options.clamp_r_one) {
        lw += l_plus - l_minus;
      } else {
        lw += log_mix(state.theta, l_plus) - log_mix(state.theta, l_minus);
      }
    }
    log_w[j] = lw;
  }
  return normalize_log_weights(log_w);
}

std::uint32_t sample_z(std::size_t i, const SubspaceState& state,
                       const Matrix& data, const SubspaceHypers& hypers,
                       RngStream& rng, const GibbsOptions& options) {
  auto probs = z_posterior(i, state, data, hypers, options);
  std::vector<double> cdf(probs.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    cdf[j] = acc;
  }
  return static_cast<std::uint32_t>(rng.sample_cdf(cdf));
}

double r_posterior(std::size_t j, std::size_t m, const SubspaceState& state,
                   const Matrix& data, const SubspaceHypers& hypers,
                   const GibbsOptions& options) {
  check_state(state, data, hypers);
  if (options.clamp_r_one) return 1.0;
  double n = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t l = 0; l < data.rows; ++l) {
    if (state.z[l] != j) continue;
    const double u = data(l, m) - state.mu[m];
    n += 1.0;
    s1 += u;
    s2 += u * u;
  }
  double log_lam;
  if (options.printed_lambda) {
    if (n == 0.0) {
      log_lam = 0.0;
    } else {
      const double c = 1.0 + n * state.eta;
      log_lam =
          -0.5 * std::log(c) + (state.eta / c) * s2 / (2.0 * state.sigma2[m]);
    }
  } else {
    log_lam = llr_stats(n, s1, state.sigma2[m], state.eta);
  }
  // p = theta lambda / (theta lambda + 1 - theta)
  const double t = std::log(state.theta) + log_lam;
  const double f = std::log1p(-state.theta);
  return std::exp(t - logaddexp(t, f));
}

std::pair<int, double> sample_r_b(std::size_t j, std::size_t m,
                                  const SubspaceState& state,
                                  const Matrix& data,
                                  const SubspaceHypers& hypers, RngStream& rng,
                                  const GibbsOptions& options) {
  const double p1 = r_posterior(j, m, state, data, hypers, options);
  const int r = options.clamp_r_one ? 1 : (rng.u01() <= p1 ? 1 : 0);
  double b;
  if (r == 1) {
    double n = 0.0, s1 = 0.0;
    for (std::size_t l = 0; l < data.rows; ++l) {
      if (state.z[l] != j) continue;
      n += 1.0;
      s1 += data(l, m) - state.mu[m];
    }
    const double prec = n + 1.0 / state.eta;
    b = rng.normal(s1 / prec, std::sqrt(state.sigma2[m] / prec));
  } else {
    b = rng.normal(0.0, std::sqrt(state.eta * state.sigma2[m]));
  }
  return {r, b};
}

double sample_mu(std::size_t m, const SubspaceState& state, const Matrix& data,
                 const SubspaceHypers& hypers, RngStream& rng) {
  check_state(state, data, hypers);
  const double n = static_cast<double>(data.rows);
  double eps_sum = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i)
    eps_sum += data(i, m) - state.r(state.z[i], m) * state.b(state.z[i], m);
  const double v_hat = 1.0 / (n / state.sigma2[m] + 1.0 / hypers.v);
  const double m_hat =
      v_hat * (eps_sum / state.sigma2[m] + hypers.m / hypers.v);
  return rng.normal(m_hat, std::sqrt(v_hat));
}

double sample_sigma2(std::size_t m, const SubspaceState& state,
                     const Matrix& data, const SubspaceHypers& hypers,
                     RngStream& rng) {
  check_state(state, data, hypers);
  double rss = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    const double resid = data(i, m) - state.mu[m] -
                         state.r(state.z[i], m) * state.b(state.z[i], m);
    rss += resid * resid;
  }
  double shift = 0.0;
  for (std::size_t j = 0; j < hypers.k; ++j)
    shift += state.b(j, m) * state.b(j, m);
  const double shape =
      hypers.a_sigma + 0.5 * (double(data.rows) + double(hypers.k));
  const double rate = hypers.b_sigma + 0.5 * (rss + shift / state.eta);
  return rng.inverse_gamma(shape, rate);
}

double sample_theta(const SubspaceState& state, const SubspaceHypers& hypers,
                    RngStream& rng) {
  double ones = 0.0;
  for (double v : state.r.data) ones += v;
  const double total = double(hypers.k) * double(hypers.d);
  return rng.beta(hypers.a_theta + ones, hypers.b_theta + total - ones);
}

double sample_eta(const SubspaceState& state, const SubspaceHypers& hypers,
                  RngStream& rng) {
  double s = 0.0;
  for (std::size_t j = 0; j < hypers.k; ++j)
    for (std::size_t m = 0; m < hypers.d; ++m)
      s += state.b(j, m) * state.b(j, m) / state.sigma2[m];
  const double shape = hypers.a_eta + 0.5 * double(hypers.k) * double(hypers.d);
  return rng.inverse_gamma(shape, hypers.b_eta + 0.5 * s);
}

void gibbs_sweep(SubspaceState& state, const Matrix& data,
                 const SubspaceHypers& hypers, RngStream& rng,
                 const GibbsOptions& options) {
  check_state(state, data, hypers);
  for (std::size_t i = 0; i < data.rows; ++i)
    state.z[i] = sample_z(i, state, data, hypers, rng, options);
  for (std::size_t j = 0; j < hypers.k; ++j)
    for (std::size_t m = 0; m < hypers.d; ++m) {
      auto [r, b] = sample_r_b(j, m, state, data, hypers, rng, options);
      state.r(j, m) = double(r);
      state.b(j, m) = b;
    }
  if (options.update_mu)
    for (std::size_t m = 0; m < hypers.d; ++m)
      state.mu[m] = sample_mu(m, state, data, hypers, rng);
  if (options.update_sigma2)
    for (std::size_t m = 0; m < hypers.d; ++m)
      state.sigma2[m] = sample_sigma2(m, state, data, hypers, rng);
  if (options.update_theta)
    state.theta = sample_theta(state, hypers, rng);
  if (options.update_eta) state.eta = sample_eta(state, hypers, rng);
}

ForwardSample forward_sample(const SubspaceHypers& hypers, std::size_t n,
                             RngStream& rng) {
  ForwardSample out;
  auto& st = out.state;
  st.theta = rng.beta(hypers.a_theta, hypers.b_theta);
  st.eta = rng.inverse_gamma(hypers.a_eta, hypers.b_eta);
  st.mu.resize(hypers.d);
  st.sigma2.resize(hypers.d);
  for (std::size_t m = 0; m < hypers.d; ++m) {
    st.mu[m] = rng.normal(hypers.m, std::sqrt(hypers.v));
    st.sigma2[m] = rng.inverse_gamma(hypers.a_sigma, hypers.b_sigma);
  }
  st.r = Matrix(hypers.k, hypers.d);
  st.b = Matrix(hypers.k, hypers.d);
  for (std::size_t j = 0; j < hypers.k; ++j)
    for (std::size_t m = 0; m < hypers.d; ++m) {
      st.r(j, m) = rng.u01() <= st.theta ? 1.0 : 0.0;
      st.b(j, m) = rng.normal(0.0, std::sqrt(st.eta * st.sigma2[m]));
    }

  std::vector<double> pi(hypers.k);
  rng.dirichlet_symmetric(hypers.alpha, pi);
  std::vector<double> cdf(hypers.k);
  double acc = 0.0;
  for (std::size_t j = 0; j < hypers.k; ++j) {
    acc += pi[j];
    cdf[j] = acc;
  }
  st.z.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    st.z[i] = static_cast<std::uint32_t>(rng.sample_cdf(cdf));

  out.data = Matrix(n, hypers.d);
  redraw_data(st, out.data, rng);
  return out;
}

void redraw_data(const SubspaceState& state, Matrix& data, RngStream& rng) {
  for (std::size_t i = 0; i < data.rows; ++i) {
    const std::size_t j = state.z[i];
    for (std::size_t m = 0; m < data.cols; ++m)
      data(i, m) = state.mu[m] + state.r(j, m) * state.b(j, m) +
                   rng.normal(0.0, std::sqrt(state.sigma2[m]));
  }
}

}  // namespace smc
