#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "smc/cluster_filter.hpp"
#include "smc/kmeans.hpp"
#include "smc/matrix.hpp"
#include "smc/models.hpp"
#include "smc/particle.hpp"
#include "smc/rng.hpp"
#include "smc/sobol.hpp"
#include "smc/ssmc.hpp"
#include "smc/subspace.hpp"

namespace py = pybind11;
using namespace smc;

namespace {

using DoubleArray =
    py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)),
           static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), sizeof(double) * m.data.size());
  return m;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::memcpy(out.mutable_data(), m.data.data(),
              sizeof(double) * m.data.size());
  return out;
}

py::array_t<double> to_array_1d(const std::vector<double>& v) {
  py::array_t<double> out(v.size());
  std::memcpy(out.mutable_data(), v.data(), sizeof(double) * v.size());
  return out;
}

py::array_t<std::uint32_t> to_array_u32(const std::vector<std::uint32_t>& v) {
  py::array_t<std::uint32_t> out(v.size());
  std::memcpy(out.mutable_data(), v.data(), sizeof(std::uint32_t) * v.size());
  return out;
}

std::vector<std::uint32_t> to_u32_vector(
    const py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>&
        a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return {a.data(), a.data() + a.shape(0)};
}

CandidateMode parse_candidate_mode(const std::string& s) {
  if (s == "sobol") return CandidateMode::kSobol;
  if (s == "data_subsample") return CandidateMode::kDataSubsample;
  throw std::invalid_argument("candidate_mode must be sobol or data_subsample");
}

py::dict kmeans_result_dict(const KMeansResult& r) {
  py::dict d;
  d["centers"] = to_array(r.centers);
  d["assignments"] = to_array_u32(r.assignments);
  d["distortion"] = r.distortion;
  d["iterations"] = r.iterations;
  d["converged"] = r.converged;
  return d;
}

py::dict filter_output_dict(const FilterOutput& out) {
  py::dict d;
  d["step_means"] = to_array(out.step_means);
  Matrix states(out.set.count(), out.set.dim());
  for (std::size_t i = 0; i < out.set.count(); ++i) {
    auto s = out.set.state(i);
    std::copy(s.begin(), s.end(), states.row(i).begin());
  }
  d["final_states"] = to_array(states);
  auto w = out.set.weights();
  d["final_weights"] = to_array_1d({w.begin(), w.end()});

  const std::size_t T = out.diagnostics.size();
  std::vector<double> ess_pre(T), kl(T);
  std::vector<std::uint32_t> resampled(T), unique_count(T), n_clusters(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& g = out.diagnostics[t];
    ess_pre[t] = g.ess_pre;
    kl[t] = g.cluster_kl;
    resampled[t] = g.resampled ? 1 : 0;
    unique_count[t] = static_cast<std::uint32_t>(g.unique_count);
    n_clusters[t] = static_cast<std::uint32_t>(g.n_clusters);
  }
  d["ess_pre"] = to_array_1d(ess_pre);
  d["cluster_kl"] = to_array_1d(kl);
  d["resampled"] = to_array_u32(resampled);
  d["unique_count"] = to_array_u32(unique_count);
  d["n_clusters"] = to_array_u32(n_clusters);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SMC clustering core: particle filters, SSMC k-means seeding, "
            "cluster-resampling utilities";

  m.def(
      "ess",
      [](const DoubleArray& w) {
        std::vector<double> v(w.data(), w.data() + w.size());
        return effective_sample_size(v);
      },
      py::arg("weights"), "1 / sum(w^2) for normalized weights");

  m.def(
      "sobol_points",
      [](std::size_t n, std::size_t d, std::vector<double> lo,
         std::vector<double> hi) {
        return to_array(sobol_points(n, d, lo, hi));
      },
      py::arg("n"), py::arg("d"), py::arg("lo"), py::arg("hi"),
      "first n Sobol points scaled into the box [lo, hi]");

  m.def("benchmark_gmm_means",
        []() { return to_array(benchmark_gmm_spec().means); });

  m.def(
      "simulate_gmm",
      [](const DoubleArray& means, double sigma2, std::size_t points_per_cluster,
         std::uint64_t seed) {
        GmmSpec spec;
        spec.means = to_matrix(means);
        spec.sigma2 = sigma2;
        spec.points_per_cluster = points_per_cluster;
        RngStream rng(seed);
        auto s = simulate_gmm(spec, rng);
        return py::make_tuple(to_array(s.points), to_array_u32(s.labels));
      },
      py::arg("means"), py::arg("sigma2") = 0.1,
      py::arg("points_per_cluster") = 100, py::arg("seed") = 0,
      "returns (points, labels)");

  m.def(
      "kmeanspp_init",
      [](const DoubleArray& points, std::size_t k, std::uint64_t seed) {
        RngStream rng(seed);
        return to_array(kmeanspp_init(to_matrix(points), k, rng));
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "random_init",
      [](const DoubleArray& points, std::size_t k, std::uint64_t seed) {
        RngStream rng(seed);
        return to_array(random_init(to_matrix(points), k, rng));
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "lloyd",
      [](const DoubleArray& points, const DoubleArray& init, std::size_t max_iter,
         double tol) {
        return kmeans_result_dict(
            lloyd(to_matrix(points), to_matrix(init), max_iter, tol));
      },
      py::arg("points"), py::arg("init"), py::arg("max_iter") = 300,
      py::arg("tol") = 1e-9);

  m.def(
      "failure_metric",
      [](const py::array_t<std::uint32_t, py::array::c_style |
                                              py::array::forcecast>& predicted,
         const py::array_t<std::uint32_t,
                           py::array::c_style | py::array::forcecast>& labels,
         std::size_t k) {
        auto fm =
            failure_metric(to_u32_vector(predicted), to_u32_vector(labels), k);
        py::dict d;
        d["accuracy"] = fm.accuracy;
        d["failed"] = fm.failed;
        return d;
      },
      py::arg("predicted"), py::arg("labels"), py::arg("k"),
      "best label-permutation agreement; failed = accuracy < 0.90");

  m.def(
      "default_ssmc_sigma2",
      [](const DoubleArray& data) {
        return default_ssmc_sigma2(to_matrix(data));
      },
      py::arg("data"), "(average nearest-neighbor distance)^2");

  m.def(
      "run_ssmc",
      [](const DoubleArray& data, std::size_t S, std::size_t B, double sigma2,
         std::size_t k, const std::string& candidate_mode, bool full_theta,
         std::size_t max_epochs, std::uint64_t seed) {
        SsmcConfig cfg;
        cfg.S = S;
        cfg.B = B;
        cfg.sigma2 = sigma2;
        cfg.k = k;
        cfg.candidate_mode = parse_candidate_mode(candidate_mode);
        cfg.full_theta = full_theta;
        cfg.max_epochs = max_epochs;
        cfg.seed = seed;
        auto res = run_ssmc(to_matrix(data), cfg);
        py::dict d;
        d["centers"] = to_array(res.centers);
        d["collapsed"] = res.collapsed;
        d["padded"] = res.padded;
        d["epochs"] = res.epochs;
        d["restarts"] = res.restarts;
        d["final_distinct"] = res.final_distinct;
        std::vector<std::uint32_t> trace(res.distinct_trace.begin(),
                                         res.distinct_trace.end());
        d["distinct_trace"] = to_array_u32(trace);
        return d;
      },
      py::arg("data"), py::arg("S") = 100, py::arg("B") = 40,
      py::arg("sigma2") = -1.0, py::arg("k") = 4,
      py::arg("candidate_mode") = "sobol", py::arg("full_theta") = false,
      py::arg("max_epochs") = 50, py::arg("seed") = 0,
      "batched static-parameter SMC; returns the surviving k centers");

  m.def(
      "cluster_kl",
      [](const DoubleArray& weights,
         const py::array_t<std::uint32_t, py::array::c_style |
                                              py::array::forcecast>& assignments,
         std::size_t k) {
        std::vector<double> w(weights.data(), weights.data() + weights.size());
        auto part = make_partition(to_u32_vector(assignments), k, w);
        return cluster_kl(part.cumulative_weights, part.sizes, w.size());
      },
      py::arg("weights"), py::arg("assignments"), py::arg("k"),
      "sum_j v_j ln(v_j / (|C_j|/N))");

  m.def(
      "simulate_sv",
      [](double phi, double sigma2, double beta, std::size_t T,
         std::uint64_t seed) {
        SvParams p{phi, sigma2, beta, T};
        RngStream rng(seed);
        auto s = simulate_sv(p, rng);
        return py::make_tuple(to_array_1d(s.states), to_array(s.observations));
      },
      py::arg("phi") = 0.8, py::arg("sigma2") = 0.9, py::arg("beta") = 0.7,
      py::arg("T") = 40, py::arg("seed") = 0,
      "returns (latent states, T x 1 observations)");

  m.def(
      "run_sv_filter",
      [](const DoubleArray& observations, double phi, double sigma2,
         double beta, std::size_t n_particles, double ess_fraction,
         std::uint64_t seed, bool clustered, std::size_t k) {
        SvParams p{phi, sigma2, beta,
                   static_cast<std::size_t>(observations.shape(0))};
        SvModel model(p);
        FilterConfig cfg;
        cfg.n_particles = n_particles;
        cfg.ess_threshold_fraction = ess_fraction;
        cfg.seed = seed;
        Matrix obs = to_matrix(observations);
        if (clustered) {
          KMeansClusterer clusterer;
          return filter_output_dict(run_cbf(model, obs, clusterer, k, cfg));
        }
        return filter_output_dict(run_filter(model, obs, cfg));
      },
      py::arg("observations"), py::arg("phi") = 0.8, py::arg("sigma2") = 0.9,
      py::arg("beta") = 0.7, py::arg("n_particles") = 1000,
      py::arg("ess_fraction") = 0.5, py::arg("seed") = 0,
      py::arg("clustered") = false, py::arg("k") = 10,
      "bootstrap filter (or clustering-based variant) on the stochastic "
      "volatility model");

  m.def(
      "run_subspace_chain",
      [](const DoubleArray& data, std::size_t k, std::size_t sweeps,
         std::uint64_t seed) {
        Matrix y = to_matrix(data);
        SubspaceHypers hy;
        hy.k = k;
        hy.d = y.cols;
        RngStream rng(seed);
        auto state = forward_sample(hy, y.rows, rng).state;
        std::vector<double> theta(sweeps), eta(sweeps), r_total(sweeps);
        for (std::size_t s = 0; s < sweeps; ++s) {
          gibbs_sweep(state, y, hy, rng);
          theta[s] = state.theta;
          eta[s] = state.eta;
          double r = 0.0;
          for (double x : state.r.data) r += x;
          r_total[s] = r;
        }
        py::dict d;
        d["theta"] = to_array_1d(theta);
        d["eta"] = to_array_1d(eta);
        d["r_total"] = to_array_1d(r_total);
        return d;
      },
      py::arg("data"), py::arg("k") = 2, py::arg("sweeps") = 100,
      py::arg("seed") = 0,
      "collapsed Gibbs on the subspace model with default hyperpriors; "
      "returns per-sweep traces");
}
