import json
import os
import subprocess

import numpy as np
import pytest

import contregime as cr


def test_partitions():
    assert cr.make_partition(1.0, 4) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert cr.refine([0.0, 1.0]) == [0.0, 0.5, 1.0]
    with pytest.raises(cr.InvalidArgument):
        cr.make_partition(1.0, 0)


def test_exact_oracle_and_estimates():
    assert abs(cr.enumerate_exact("BIN3", "always_treat", 3) - 0.7085) < 1e-12
    assert abs(cr.enumerate_exact("BIN3", {"variant": "never_treat"}, 3) - 0.2915) < 1e-12
    est = cr.estimate("BIN3", "always_treat", 3, estimator="gcomp", n=100, seed=1)
    assert abs(est["point"] - 0.7085) < 1e-10
    ipw = cr.estimate("BIN3", "always_treat", 3, estimator="ipw", n=20000, seed=1)
    assert abs(ipw["point"] - 0.7085) <= 3 * ipw["se"]
    assert ipw["diagnostics"]["ess"] <= 20000


def test_cohort_arrays():
    c = cr.simulate_observed("OU1", 4, 3, seed=2)
    assert c["covariate"].shape == (3, 257)
    assert c["treatment"].shape == (3, 257)
    assert np.all(np.isfinite(c["covariate"]))
    np.testing.assert_array_equal(c["outcome"], c["covariate"][:, -1])
    again = cr.simulate_observed("OU1", 4, 3, seed=2, threads=2)
    np.testing.assert_array_equal(c["covariate"], again["covariate"])


def test_errors_map_to_python_exceptions():
    with pytest.raises(cr.PositivityError):
        cr.estimate("OU1", "point_mass:value=0.5", 4, estimator="ipw", n=10, seed=1)
    with pytest.raises(cr.ScopeError):
        cr.estimate("OU1", "shift:delta=0.5", 4, estimator="dr", n=10, seed=1)
    with pytest.raises(cr.UnsupportedError):
        cr.enumerate_exact("OU1", "null", 4)
    with pytest.raises(cr.ConfigError):
        cr.run_config({"dgp": {"preset": "BIN3"}, "regime": {"variant": "teleport"}})
    assert issubclass(cr.PositivityError, cr.Error)


def test_density_ratio():
    assert cr.density_ratio("BIN3", "always_treat", 1.0, 1.0) == pytest.approx(1.25)
    assert cr.density_ratio("BIN3", "null", 0.0, 1.0) == 1.0


def test_run_config(tmp_path):
    cfg = {
        "dgp": {"preset": "CENS3"},
        "regime": "null",
        "decisions": 3,
        "n": 2000,
        "replications": 5,
        "seed": 3,
        "estimators": ["ipw", "dr"],
    }
    out = cr.run_config(cfg, tmp_path)
    assert out["oracle_method"] == "enumerate_exact"
    assert out["pass"]
    assert {a["estimator"] for a in out["aggregates"]} == {"ipw", "dr"}
    assert (tmp_path / "aggregates.csv").exists()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["seed"] == 3


def test_toml_text():
    cfg = cr.load_toml('seed = 4\n[dgp]\npreset = "BIN3"\n')
    assert cfg == {"seed": 4, "dgp": {"preset": "BIN3"}}


@pytest.mark.skipif("CONTREGIME_CLI" not in os.environ, reason="CLI path not given")
def test_cli_round_trip(tmp_path):
    cli = os.environ["CONTREGIME_CLI"]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dgp": {"preset": "BIN3"}, "regime": "always_treat", "decisions": 3,
                               "n": 20000, "seed": 8, "estimators": ["gcomp", "ipw"]}))
    sim = subprocess.run([cli, "simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")],
                         capture_output=True, text=True)
    assert sim.returncode == 0, sim.stderr
    est = subprocess.run([cli, "estimate", "--config", str(cfg), "--estimator", "ipw",
                          "--input", str(tmp_path / "sim" / "cohort.csv")], capture_output=True, text=True)
    assert est.returncode == 0, est.stderr
    assert json.loads(est.stdout)["n"] == 20000
    bad = subprocess.run([cli, "run", "--config", str(tmp_path / "missing.toml")], capture_output=True, text=True)
    assert bad.returncode == 1
    diag = subprocess.run([cli, "diagnose", "--config", str(cfg), "--out", str(tmp_path / "d")],
                          capture_output=True, text=True)
    assert diag.returncode == 0, diag.stdout + diag.stderr
