"""Sequential Monte Carlo clustering toolkit.

Thin wrapper over the C++ core: particle filtering for state-space models,
SSMC k-means initialization, and the cluster-resampling weight adjustment.
"""

from smc_cluster._core import (
    benchmark_gmm_means,
    cluster_kl,
    default_ssmc_sigma2,
    ess,
    failure_metric,
    kmeanspp_init,
    lloyd,
    random_init,
    run_ssmc,
    run_subspace_chain,
    run_sv_filter,
    simulate_gmm,
    simulate_sv,
    sobol_points,
)

__all__ = [
    "benchmark_gmm_means",
    "cluster_kl",
    "default_ssmc_sigma2",
    "ess",
    "failure_metric",
    "kmeanspp_init",
    "lloyd",
    "random_init",
    "run_ssmc",
    "run_subspace_chain",
    "run_sv_filter",
    "simulate_gmm",
    "simulate_sv",
    "sobol_points",
]

__version__ = "0.1.0"
