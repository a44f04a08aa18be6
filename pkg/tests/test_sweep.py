import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cgolab.errors import ConfigError, InsufficientData
from cgolab.sweep import (CSV_COLUMNS, FitReport, StabilityRecord,
                          SweepConfig, fit_stability, potential_spec_from_dict,
                          read_records_csv, render_report, run_sweep,
                          sweep_config_from_dict, write_records_csv)
from cgolab.grid import GaussianBump, ZeroPotential


def small_config(tmp_path, **kw):
    base = dict(
        q1=GaussianBump(center=(0.1, -0.05, 0.0), width=0.3, amplitude=1.0),
        q2=ZeroPotential(), extent=1.0, n=16, k_list=[1.0, 2.0],
        noise_list=[0.0], mode="oracle", radial_count=6,
        sphere_design="octahedral", R=4.0, T_max=4.0,
        output_dir=str(tmp_path / "out"))
    base.update(kw)
    return SweepConfig(**base)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        small_config(tmp_path, s=1.0)
    with pytest.raises(ConfigError):
        small_config(tmp_path, k_list=[0.5])
    with pytest.raises(ConfigError):
        small_config(tmp_path, noise_list=[0.5])  # above 1/e
    with pytest.raises(ConfigError):
        small_config(tmp_path, mode="psychic")


def test_config_hash_sensitivity(tmp_path):
    c1 = small_config(tmp_path)
    base = c1.config_hash()
    # every physics-relevant field must move the hash
    changed = [
        small_config(tmp_path, n=32),
        small_config(tmp_path, extent=0.9),
        small_config(tmp_path, k_list=[1.0]),
        small_config(tmp_path, noise_list=[1e-3]),
        small_config(tmp_path, s=2.5),
        small_config(tmp_path, R=5.0),
        small_config(tmp_path, p=0.5),
        small_config(tmp_path, mode="boundary"),
        small_config(tmp_path, sphere_design="d26"),
        small_config(tmp_path, radial_count=8),
        small_config(tmp_path, seed=7),
        small_config(tmp_path, noise_scale="dist"),
        small_config(tmp_path, T_max=5.0),
        small_config(tmp_path, q1=GaussianBump(center=(0.0, 0.0, 0.0),
                                               width=0.3, amplitude=1.0)),
    ]
    hashes = [c.config_hash() for c in changed]
    assert base not in hashes
    assert len(set(hashes)) == len(hashes)
    # output_dir must NOT move the hash
    c2 = small_config(tmp_path, output_dir=str(tmp_path / "elsewhere"))
    assert c2.config_hash() == base


def test_config_from_dict_roundtrip():
    doc = {
        "grid": {"extent": 1.0, "n": 16},
        "q1": {"type": "gaussian", "center": [0.1, -0.05, 0.0],
               "width": 0.3, "amplitude": 1.0},
        "q2": {"type": "zero"},
        "k_list": [1, 2], "noise_list": [0.0], "mode": "oracle",
        "radial_count": 6, "T_max": 4.0,
    }
    cfg = sweep_config_from_dict(doc)
    assert cfg.n == 16
    assert cfg.k_list == [1.0, 2.0]
    with pytest.raises(ConfigError):
        sweep_config_from_dict({"grid": {"extent": 1.0, "n": 16}})


def test_potential_spec_parsing():
    spec = potential_spec_from_dict(
        {"type": "sum", "bumps": [
            {"type": "gaussian", "center": [0, 0, 0], "width": 0.2,
             "amplitude": 1.0}]})
    assert len(spec.bumps) == 1
    with pytest.raises(ConfigError):
        potential_spec_from_dict({"type": "mystery"})


def test_run_sweep_shape_and_resume(tmp_path):
    cfg = small_config(tmp_path)
    records = run_sweep(cfg)
    assert len(records) == 2
    assert all(not r.error_tag for r in records)
    assert all(r.regime == "exact" for r in records)
    # resume: cell files exist, rerun must give identical physics values
    records2 = run_sweep(cfg)
    for a, b in zip(records, records2):
        assert a.error_h_minus_s == b.error_h_minus_s
        assert a.T == b.T


def test_sweep_determinism_csv(tmp_path):
    cfg1 = small_config(tmp_path, output_dir=str(tmp_path / "r1"),
                        noise_list=[1e-2], mode="oracle")
    cfg2 = small_config(tmp_path, output_dir=str(tmp_path / "r2"),
                        noise_list=[1e-2], mode="oracle")
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    write_records_csv(p1, run_sweep(cfg1))
    write_records_csv(p2, run_sweep(cfg2))
    assert p1.read_bytes() == p2.read_bytes()


def test_fit_stability_synthetic():
    # records generated from the two-term error shape with known exponents
    records = []
    C = 0.3
    for k in (1.0, 8.0):
        for eps in (1e-2, 1e-3, 1e-4, 1e-5):
            err = C * eps + C * (k + math.log(1.0 / eps)) ** (-1.0)
            records.append(StabilityRecord(k=k, noise=eps,
                                           error_h_minus_s=err))
    fit = fit_stability(records)
    # at small eps the log term dominates: slope near -1
    assert fit.log_regime_slope == pytest.approx(-1.0, abs=0.35)
    assert fit.conforming


def test_fit_lipschitz_synthetic():
    records = []
    for k in (2.0, 8.0):
        for eps in (1e-2, 1e-3, 1e-4):
            records.append(StabilityRecord(k=k, noise=eps,
                                           error_h_minus_s=5.0 * eps))
    fit = fit_stability(records)
    assert fit.lipschitz_slope == pytest.approx(1.0, abs=0.05)


def test_fit_insufficient_data():
    records = [StabilityRecord(k=1.0, noise=1e-2, error_h_minus_s=0.1)]
    with pytest.raises(InsufficientData):
        fit_stability(records)


def test_csv_roundtrip(tmp_path):
    records = [StabilityRecord(k=1.0, noise=1e-3, dist_proxy=1e-3, A=1e-6,
                               regime="case_ii", T=2.0,
                               error_h_minus_s=0.05, error_torus=0.06,
                               I1=1.0, I2=0.0, I3=0.01,
                               mean_probe_error_estimate=0.02,
                               truncation_warnings=3)]
    path = tmp_path / "records.csv"
    write_records_csv(path, records)
    back = read_records_csv(path)
    assert back[0].error_h_minus_s == records[0].error_h_minus_s
    assert back[0].regime == "case_ii"
    header = path.read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    assert "wall_time" not in header


def test_render_report(tmp_path):
    records = []
    for k in (1.0, 2.0):
        for eps in (1e-2, 1e-3, 1e-4):
            records.append(StabilityRecord(
                k=k, noise=eps, error_h_minus_s=eps * k, regime="case_ii"))
    fit = fit_stability(records)
    paths = render_report(records, fit, tmp_path / "rep")
    for key in ("csv", "fit", "error_vs_eps", "error_vs_k"):
        assert Path(paths[key]).exists()
    with open(paths["fit"]) as fh:
        doc = json.load(fh)
    assert "lipschitz_slope" in doc


def test_render_report_empty():
    with pytest.raises(ConfigError):
        render_report([], None, "nowhere")


def test_cli_sweep_and_exit_codes(tmp_path):
    cfg = {
        "grid": {"extent": 1.0, "n": 16},
        "q1": {"type": "gaussian", "center": [0.1, -0.05, 0.0],
               "width": 0.3, "amplitude": 1.0},
        "q2": {"type": "zero"},
        "k_list": [1.0], "noise_list": [0.0], "mode": "oracle",
        "radial_count": 6, "sphere_design": "octahedral",
        "R": 4.0, "T_max": 4.0,
        "output_dir": str(tmp_path / "cli_out"),
    }
    import yaml
    cfg_path = tmp_path / "sweep.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    proc = subprocess.run([sys.executable, "-m", "cgolab.cli", "sweep",
                           str(cfg_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "cli_out" / "records.csv").exists()

    # bad config -> exit 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid: {extent: 1.0, n: 16}\n")
    proc = subprocess.run([sys.executable, "-m", "cgolab.cli", "sweep",
                           str(bad)], capture_output=True, text=True)
    assert proc.returncode == 2
