#include "smc/ssmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>

#include "smc/errors.hpp"
#include "smc/particle.hpp"
#include "smc/sobol.hpp"

namespace smc {
namespace {

double log_gaussian(std::span<const double> y, std::span<const double> mu,
                    double sigma2) {
  const double d = static_cast<double>(y.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma2) -
         squared_distance(y, mu) / (2.0 * sigma2);
}

// Groups bitwise-identical rows. Returns one representative index per
// distinct value plus each row's group id.
struct RowGroups {
  std::vector<std::size_t> representative;
  std::vector<std::size_t> group_of;  // per row
};

RowGroups group_rows(const Matrix& m) {
  const std::size_t n = m.rows;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t bytes = m.cols * sizeof(double);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::memcmp(m.row(a).data(), m.row(b).data(), bytes) < 0;
  });
  RowGroups g;
  g.group_of.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    if (r == 0 || std::memcmp(m.row(i).data(), m.row(order[r - 1]).data(),
                              bytes) != 0) {
      g.representative.push_back(i);
    }
    g.group_of[i] = g.representative.size() - 1;
  }
  return g;
}

std::vector<double> group_weights(const RowGroups& g,
                                  std::span<const double> w) {
  std::vector<double> out(g.representative.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) out[g.group_of[i]] += w[i];
  return out;
}

void bounding_box(const Matrix& data, std::vector<double>& lo,
                  std::vector<double>& hi) {
  lo.assign(data.cols, std::numeric_limits<double>::infinity());
  hi.assign(data.cols, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < data.rows; ++i) {
    auto row = data.row(i);
    for (std::size_t j = 0; j < data.cols; ++j) {
      lo[j] = std::min(lo[j], row[j]);
      hi[j] = std::max(hi[j], row[j]);
    }
  }
}

// D^2-weighted draws from data, continuing from already chosen centers.
void kmeanspp_pad(const Matrix& data, Matrix& centers, std::size_t filled,
                  RngStream& rng) {
  const std::size_t n = data.rows;
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < filled; ++c)
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(data.row(i), centers.row(c)));
  std::vector<double> cdf(n);
  for (std::size_t c = filled; c < centers.rows; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      cdf[i] = acc;
    }
    std::size_t pick;
    if (acc > 0.0) {
      pick = rng.sample_cdf(cdf);
    } else {
      pick = rng.uniform_index(n);
    }
    auto src = data.row(pick);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(data.row(i), src));
  }
}

}  // namespace

double default_ssmc_sigma2(const Matrix& data) {
  if (data.rows < 2) throw std::invalid_argument("need at least 2 points");
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < data.rows; ++j) {
      if (j == i) continue;
      best = std::min(best, squared_distance(data.row(i), data.row(j)));
    }
    total += std::sqrt(best);
  }
  const double avg = total / static_cast<double>(data.rows);
  return avg * avg;
}

ThetaParticleSet generate_candidates(const Matrix& data,
                                     const SsmcConfig& config,
                                     RngStream& rng) {
  if (data.rows == 0 || data.cols == 0)
    throw std::invalid_argument("empty dataset");
  if (config.S == 0) throw std::invalid_argument("S must be positive");
  if (config.k == 0) throw std::invalid_argument("k must be positive");
  const std::size_t d = data.cols;
  const std::size_t per = config.full_theta ? config.k : 1;

  ThetaParticleSet set;
  set.k = per;
  set.d = d;
  set.weights.assign(config.S, 1.0 / static_cast<double>(config.S));
  set.thetas = Matrix(config.S, per * d);

  if (config.candidate_mode == CandidateMode::kSobol) {
    std::vector<double> lo, hi;
    bounding_box(data, lo, hi);
    Matrix pts = sobol_points(config.S * per, d, lo, hi);
    for (std::size_t i = 0; i < config.S; ++i)
      std::copy(pts.row(i * per).begin(), pts.row(i * per).begin() + per * d,
                set.thetas.row(i).begin());
  } else {
    if (per > data.rows)
      throw std::invalid_argument("k exceeds the number of data points");
    for (std::size_t i = 0; i < config.S; ++i) {
      auto perm = random_permutation(data.rows, rng);
      for (std::size_t c = 0; c < per; ++c) {
        auto src = data.row(perm[c]);
        std::copy(src.begin(), src.end(),
                  set.thetas.row(i).begin() + c * d);
      }
    }
  }
  return set;
}

double batch_log_likelihood(const Matrix& theta, const Matrix& batch,
                            double sigma2) {
  if (theta.rows == 0) throw std::invalid_argument("theta has no centers");
  if (sigma2 <= 0.0) throw std::invalid_argument("sigma2 must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.rows; ++i) {
    auto y = batch.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < theta.rows; ++c) {
      const double dist = squared_distance(y, theta.row(c));
      if (dist < best) {
        best = dist;
        arg = c;
      }
    }
    total += log_gaussian(y, theta.row(arg), sigma2);
  }
  return total;
}

std::vector<double> population_batch_log_likelihood(const Matrix& thetas,
                                                    const Matrix& batch,
                                                    double sigma2) {
  if (sigma2 <= 0.0) throw std::invalid_argument("sigma2 must be positive");
  const std::size_t S = thetas.rows;
  std::vector<double> out(S, 0.0);
  for (std::size_t i = 0; i < batch.rows; ++i) {
    auto y = batch.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t s = 0; s < S; ++s) {
      const double dist = squared_distance(y, thetas.row(s));
      if (dist < best) {
        best = dist;
        arg = s;
      }
    }
    // Ties (including exact duplicates of a value) resolve to the lowest
    // index, so each point lands on exactly one particle.
    out[arg] += log_gaussian(y, thetas.row(arg), sigma2);
  }
  return out;
}

void ssmc_step(ThetaParticleSet& set, const Matrix& batch,
               const SsmcConfig& config, double sigma2, RngStream& rng) {
  const std::size_t S = set.thetas.rows;
  std::vector<double> log_w(S);
  if (config.full_theta) {
    Matrix theta(set.k, set.d);
    for (std::size_t i = 0; i < S; ++i) {
      std::copy(set.thetas.row(i).begin(), set.thetas.row(i).end(),
                theta.data.begin());
      log_w[i] = batch_log_likelihood(theta, batch, sigma2);
    }
  } else {
    log_w = population_batch_log_likelihood(set.thetas, batch, sigma2);
  }
  for (std::size_t i = 0; i < S; ++i) log_w[i] += std::log(set.weights[i]);
  set.weights = normalize_log_weights(log_w);
  ++set.batch_index;

  if (config.resample) {
    auto picks = multinomial_draw(set.weights, S, rng);
    Matrix next(S, set.thetas.cols);
    for (std::size_t i = 0; i < S; ++i) {
      auto src = set.thetas.row(picks[i]);
      std::copy(src.begin(), src.end(), next.row(i).begin());
    }
    set.thetas = std::move(next);
    set.weights.assign(S, 1.0 / static_cast<double>(S));
  }
}

namespace {

// k highest-weight distinct values (ties by representative order).
Matrix top_distinct(const ThetaParticleSet& set, std::size_t k) {
  auto groups = group_rows(set.thetas);
  auto gw = group_weights(groups, set.weights);
  std::vector<std::size_t> order(gw.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gw[a] > gw[b]; });
  const std::size_t take = std::min(k, order.size());
  Matrix out(take, set.thetas.cols);
  for (std::size_t r = 0; r < take; ++r) {
    auto src = set.thetas.row(groups.representative[order[r]]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix reshape_row(std::span<const double> row, std::size_t k,
                   std::size_t d) {
  Matrix out(k, d);
  std::copy(row.begin(), row.end(), out.data.begin());
  return out;
}

}  // namespace

SsmcResult run_ssmc(const Matrix& data, const SsmcConfig& config) {
  if (data.rows == 0 || data.cols == 0)
    throw std::invalid_argument("empty dataset");
  if (config.k == 0) throw std::invalid_argument("k must be positive");
  if (config.k > data.rows)
    throw std::invalid_argument("k exceeds the number of data points");
  if (config.B == 0) throw std::invalid_argument("batch size must be positive");
  if (!config.full_theta && config.S < config.k)
    throw std::invalid_argument("need at least k candidates");

  SsmcConfig cfg = config;
  if (cfg.candidate_mode == CandidateMode::kSobol && data.cols > 32)
    cfg.candidate_mode = CandidateMode::kDataSubsample;
  const double sigma2 =
      cfg.sigma2 > 0.0 ? cfg.sigma2 : default_ssmc_sigma2(data);

  RngStream base(cfg.seed);
  auto gen_rng = base.substream(0);
  ThetaParticleSet set = generate_candidates(data, cfg, gen_rng);

  SsmcResult res;
  const std::size_t stop_at = cfg.full_theta ? 1 : cfg.k;

  auto finalize_exact = [&](std::size_t distinct) {
    res.collapsed = true;
    res.final_distinct = distinct;
    if (cfg.full_theta) {
      auto groups = group_rows(set.thetas);
      res.centers =
          reshape_row(set.thetas.row(groups.representative[0]), cfg.k, set.d);
    } else {
      res.centers = top_distinct(set, cfg.k);
    }
  };

  std::size_t distinct = group_rows(set.thetas).representative.size();
  res.distinct_trace.push_back(distinct);
  if (distinct <= stop_at) {
    if (!cfg.full_theta && distinct < cfg.k) {
      Matrix centers(cfg.k, set.d);
      Matrix got = top_distinct(set, distinct);
      for (std::size_t r = 0; r < got.rows; ++r)
        std::copy(got.row(r).begin(), got.row(r).end(),
                  centers.row(r).begin());
      auto pad_rng = base.substream(999);
      kmeanspp_pad(data, centers, distinct, pad_rng);
      res.centers = std::move(centers);
      res.collapsed = true;
      res.padded = true;
      res.final_distinct = distinct;
    } else {
      finalize_exact(distinct);
    }
    return res;
  }

  ThetaParticleSet snapshot = set;  // most recent state with > k distinct
  std::size_t batch_size = cfg.B;
  const std::size_t n = data.rows;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    res.epochs = epoch + 1;
    auto epoch_rng = base.substream(1 + epoch);
    auto perm_rng = epoch_rng.substream(0);
    auto perm = random_permutation(n, perm_rng);

    std::size_t batch_no = 0;
    for (std::size_t off = 0; off < n; off += batch_size, ++batch_no) {
      const std::size_t len = std::min(batch_size, n - off);
      Matrix batch(len, data.cols);
      for (std::size_t r = 0; r < len; ++r) {
        auto src = data.row(perm[off + r]);
        std::copy(src.begin(), src.end(), batch.row(r).begin());
      }
      auto step_rng = epoch_rng.substream(1 + batch_no);
      ssmc_step(set, batch, cfg, sigma2, step_rng);

      distinct = group_rows(set.thetas).representative.size();
      res.distinct_trace.push_back(distinct);

      if (distinct > stop_at) {
        snapshot = set;
        continue;
      }
      if (distinct == stop_at) {
        finalize_exact(distinct);
        return res;
      }
      // Overshoot: fewer than k distinct values survived the resample.
      if (res.restarts < 3) {
        ++res.restarts;
        set = snapshot;
        batch_size = std::max<std::size_t>(1, batch_size / 2);
        break;
      }
      Matrix centers(cfg.k, set.d);
      Matrix got = top_distinct(set, distinct);
      for (std::size_t r = 0; r < got.rows; ++r)
        std::copy(got.row(r).begin(), got.row(r).end(), centers.row(r).begin());
      auto pad_rng = base.substream(999);
      kmeanspp_pad(data, centers, distinct, pad_rng);
      res.centers = std::move(centers);
      res.collapsed = true;
      res.padded = true;
      res.final_distinct = distinct;
      return res;
    }
  }

  // Never collapsed: report the strongest k distinct values and flag it.
  res.collapsed = false;
  res.final_distinct = group_rows(set.thetas).representative.size();
  if (cfg.full_theta) {
    auto groups = group_rows(set.thetas);
    auto gw = group_weights(groups, set.weights);
    std::size_t best = 0;
    for (std::size_t g = 1; g < gw.size(); ++g)
      if (gw[g] > gw[best]) best = g;
    res.centers =
        reshape_row(set.thetas.row(groups.representative[best]), cfg.k, set.d);
  } else {
    res.centers = top_distinct(set, cfg.k);
    if (res.centers.rows < cfg.k) {
      Matrix centers(cfg.k, set.d);
      for (std::size_t r = 0; r < res.centers.rows; ++r)
        std::copy(res.centers.row(r).begin(), res.centers.row(r).end(),
                  centers.row(r).begin());
      auto pad_rng = base.substream(999);
      kmeanspp_pad(data, centers, res.centers.rows, pad_rng);
      res.centers = std::move(centers);
      res.padded = true;
    }
  }
  return res;
}

}  // namespace smc
