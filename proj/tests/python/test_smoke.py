import math
import os
import tempfile

import numpy as np
import pytest

import mmcmc


def out_dir(name):
    base = os.environ.get("MMC_TMP") or tempfile.gettempdir()
    path = os.path.join(base, name)
    os.makedirs(path, exist_ok=True)
    return path


def test_gmm_density_values():
    normal = mmcmc.GaussianMixture([1.0], [np.zeros(1)], [np.eye(1)])
    assert normal.log_density(np.zeros(1)) == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-12)
    assert np.allclose(normal.gradient(np.array([0.7])), [-0.7])


def test_benchmark_generator():
    g = mmcmc.gmm_generate_benchmark(10, 10, "prop", 1)
    assert g.dimension == 10
    assert g.weights[-1] / g.weights[0] == pytest.approx(10.0)
    mean, cov = g.reference_moments()
    assert mean.shape == (10,) and cov.shape == (10, 10)
    with pytest.raises(ValueError):
        mmcmc.gmm_generate_benchmark(2, 2, "lopsided", 1)


def test_sensor_instance():
    s = mmcmc.sensor_generate_instance(3, 0.3, 0.02, 4)
    assert s.dimension == 6
    assert "N_s=3" in s.describe()


def test_leapfrog_hand_values():
    normal = mmcmc.GaussianMixture([1.0], [np.zeros(1)], [np.eye(1)])
    x, p, ok = mmcmc.leapfrog(normal, np.array([1.0]), np.array([0.0]), 0.1, 1)
    assert ok
    assert x[0] == pytest.approx(0.995, rel=1e-14)
    assert p[0] == pytest.approx(-0.09975, rel=1e-14)


def test_acceptance_and_regeneration():
    assert mmcmc.acceptance_probability(1.0, 1.0 + math.log(2.0)) == pytest.approx(0.5)
    assert mmcmc.regeneration_probability(1.0, 1.0, 1.0, 1.0, 1.0) == 1.0
    assert mmcmc.regeneration_probability(2.0, 1.0, 0.5, 1.0, 1.0) == pytest.approx(1.0)


def test_wormhole_geometry():
    a, b = np.zeros(3), np.array([1.0, 2.0, 2.0])
    g = mmcmc.wormhole_metric(a, b, 1e-4)
    v = 2.5 * (b - a) / 3.0
    assert v @ g @ v == pytest.approx(1e-4 * 2.5**2, rel=1e-12)
    assert mmcmc.wormhole_mollifier(a, b, 0.5 * b) == 1.0


def test_bfgs_from_python():
    res = mmcmc.bfgs_maximize(
        lambda x: -float(np.sum((x - np.array([1.0, 2.0])) ** 2)),
        lambda x: -2.0 * (x - np.array([1.0, 2.0])),
        np.zeros(2),
    )
    assert res.converged
    assert np.allclose(res.maximizer, [1.0, 2.0], atol=1e-6)


def test_mode_finding_and_audit():
    g = mmcmc.gmm_generate_benchmark(4, 3, "equal", 2)
    reg = mmcmc.find_all_modes(g, seed=1)
    assert len(reg) == 3
    assert sum(r.weight for r in reg.records) == pytest.approx(1.0)
    rows = mmcmc.fictitious_mode_audit(g, reg)
    assert rows[-1][2] <= 1e-3
    assert all(ok for *_, ok in rows)


def test_diagnostics():
    assert mmcmc.rem(np.array([1.1, 0.9]), np.array([1.0, 1.0])) == pytest.approx(0.1)
    assert mmcmc.recov(1.1 * np.eye(2), np.eye(2)) == pytest.approx(0.1)
    pooled = mmcmc.pooled_mean(3, np.array([1.0]), 1, np.array([5.0]))
    assert pooled[0] == pytest.approx(2.0)


def test_config_helpers():
    assert "gmm-d10-k5-equal" in mmcmc.list_presets()
    assert "wormhole.F" in mmcmc.explain_defaults()
    text = mmcmc.check_config("target.preset = gmm-d2-k2-equal\n")
    assert mmcmc.check_config(text) == text
    with pytest.raises(mmcmc.ConfigError, match="wormhole.F"):
        mmcmc.check_config("target.preset = gmm-d2-k2-equal\nwormhole.F = -1\n")


def test_run_experiment():
    out = out_dir("py-smoke")
    res = mmcmc.run_experiment(
        "experiment.id = py\n"
        "target.preset = gmm-d2-k2-equal\n"
        f"experiment.out = {out}\n"
        "sampler.samples = 500\n"
        "hmc.tune_steps = 1000\n"
    )
    assert res["modes_found"] == 2
    assert res["cumulative_delta_x"] <= 1e-3
    with open(res["stem"] + "-diagnostics.csv") as f:
        assert f.readline().strip() == "t_seconds,rem,recov,rem_window1000,n_bfgs,modes_found"
