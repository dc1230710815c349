import math
import os
import subprocess

import numpy as np
import pytest

import mesorm


def test_semicircle_stieltjes():
    m = mesorm.stieltjes("deformed_wigner", [(0.0, 1.0)], z=2j)
    assert abs(m - 1j * (math.sqrt(2) - 1)) < 1e-10


def test_edges():
    lo, hi, hard = mesorm.edges("sample_covariance", [(1.0, 1.0)], gamma=0.25)
    assert lo == pytest.approx(0.25, abs=1e-10)
    assert hi == pytest.approx(2.25, abs=1e-10)
    assert not hard
    assert mesorm.edges("sample_covariance", [(1.0, 1.0)], gamma=1.0)[2]


def test_density_vectorized():
    x = np.array([-3.0, 0.0, 1.0])
    rho = mesorm.density("deformed_wigner", [(0.0, 1.0)], x=x)
    assert rho.shape == (3,)
    assert rho[0] == 0.0
    assert rho[1] == pytest.approx(1 / math.pi, rel=1e-8)
    assert rho[2] == pytest.approx(math.sqrt(3) / (2 * math.pi), rel=1e-8)


def test_limits():
    v1 = mesorm.limit_bulk_variance("bump", 1)
    assert v1 > 0
    assert mesorm.limit_bulk_variance("bump", 2) == pytest.approx(v1 / 2)
    assert mesorm.limit_edge_variance("bump", 1) > 0


def test_predict_edge_mean():
    rec = mesorm.predict(
        experiment__location="edge_right",
        test_function__eta0=0.05,
        experiment__finite_prediction="false",
    )
    assert rec["mean_limit"] == pytest.approx(0.25)
    assert rec["V_finite"] is None


def test_spectrum_is_sorted_and_seeded():
    a = mesorm.spectrum(overrides=["ensemble.n=100"], seed=3)
    b = mesorm.spectrum(overrides=["ensemble.n=100"], seed=3)
    assert a.shape == (100,)
    assert np.all(np.diff(a) >= 0)
    assert np.array_equal(a, b)


def test_simulate_small():
    ini = "[ensemble]\nn = 100\n[experiment]\ntrials = 30\n[test_function]\neta0 = 0.2\n"
    report = mesorm.simulate(ini, experiment__finite_prediction="false")
    assert report["trials"] == 30
    assert len(report["statistics"]) == 30
    assert report["moments"]["variance"] >= 0


def test_errors_map_to_exceptions():
    with pytest.raises(mesorm.UsageError):
        mesorm.predict(ensemble__colour="red")
    with pytest.raises(mesorm.ModelError):
        mesorm.edges("deformed_wigner", [(-1.2, 1.0), (1.2, 1.0)])


def test_cli_entry_points():
    code, out, _ = mesorm.run_cli(["edges"])
    assert code == 0
    assert '"upper"' in out
    exe = os.environ.get("MESORM_CLI")
    if exe:
        proc = subprocess.run([exe, "edges", "--set", "bogus.key=1"], capture_output=True, text=True)
        assert proc.returncode == 1
        assert "bogus.key" in proc.stderr
