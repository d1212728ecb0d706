import numpy as np
import pytest

import smc_cluster as sc


@pytest.fixture(scope="module")
def gmm():
    points, labels = sc.simulate_gmm(sc.benchmark_gmm_means(), seed=42)
    return points, labels


def test_ess_bounds():
    assert sc.ess(np.full(10, 0.1)) == pytest.approx(10.0)
    w = np.zeros(10)
    w[3] = 1.0
    assert sc.ess(w) == pytest.approx(1.0)


def test_sobol_first_point_is_box_center():
    pts = sc.sobol_points(1, 2, [0.0, 0.0], [2.0, 4.0])
    assert pts.shape == (1, 2)
    assert pts[0] == pytest.approx([1.0, 2.0])


def test_simulate_gmm_shapes(gmm):
    points, labels = gmm
    assert points.shape == (400, 2)
    assert labels.shape == (400,)
    assert set(np.unique(labels)) == {0, 1, 2, 3}


def test_lloyd_recovers_separated_clusters(gmm):
    points, labels = gmm
    init = sc.kmeanspp_init(points, 4, seed=7)
    res = sc.lloyd(points, init)
    assert res["centers"].shape == (4, 2)
    assert res["converged"]
    fm = sc.failure_metric(res["assignments"], labels, 4)
    assert fm["accuracy"] > 0.5  # kmeans++ can still merge clusters


def test_run_ssmc_full_theta_init(gmm):
    points, labels = gmm
    res = sc.run_ssmc(
        points,
        S=100,
        B=40,
        sigma2=0.1,
        k=4,
        candidate_mode="data_subsample",
        full_theta=True,
        seed=11,
    )
    assert res["collapsed"]
    assert res["centers"].shape == (4, 2)
    km = sc.lloyd(points, res["centers"])
    fm = sc.failure_metric(km["assignments"], labels, 4)
    assert not fm["failed"]

    again = sc.run_ssmc(
        points,
        S=100,
        B=40,
        sigma2=0.1,
        k=4,
        candidate_mode="data_subsample",
        full_theta=True,
        seed=11,
    )
    np.testing.assert_array_equal(res["centers"], again["centers"])


def test_default_sigma2_positive(gmm):
    points, _ = gmm
    assert sc.default_ssmc_sigma2(points) > 0.0


def test_cluster_kl_zero_on_proportional_weights():
    w = np.full(8, 0.125)
    a = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=np.uint32)
    assert sc.cluster_kl(w, a, 2) == pytest.approx(0.0, abs=1e-12)
    w2 = np.array([0.3, 0.3, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05])
    assert sc.cluster_kl(w2, a, 2) > 0.0


def test_sv_filters_run_and_are_deterministic():
    _, obs = sc.simulate_sv(T=20, seed=5)
    bf = sc.run_sv_filter(obs, n_particles=200, seed=9, clustered=False)
    cbf = sc.run_sv_filter(obs, n_particles=200, seed=9, clustered=True, k=5)
    for out in (bf, cbf):
        assert out["step_means"].shape == (20, 1)
        assert np.isfinite(out["step_means"]).all()
        assert out["ess_pre"].shape == (20,)
        assert out["final_weights"].sum() == pytest.approx(1.0)
    bf2 = sc.run_sv_filter(obs, n_particles=200, seed=9, clustered=False)
    np.testing.assert_array_equal(bf["step_means"], bf2["step_means"])
    assert cbf["n_clusters"].max() > 0  # clustering actually fired


def test_subspace_chain_traces():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(12, 2))
    out = sc.run_subspace_chain(data, k=2, sweeps=50, seed=21)
    assert out["theta"].shape == (50,)
    assert ((out["theta"] > 0) & (out["theta"] < 1)).all()
    assert (out["eta"] > 0).all()
    assert out["r_total"].max() <= 4.0
