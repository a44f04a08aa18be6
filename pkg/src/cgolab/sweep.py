"""k/noise sweep harness: cross-product experiments, curve fits, reports.

Each (k, epsilon) cell runs the full reconstruction pipeline and yields one
StabilityRecord.  Cells persist individually (JSON keyed by a config hash)
so an interrupted sweep resumes without recomputation, and record values
are deterministic under a fixed seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, asdict
from pathlib import Path

import numpy as np

from .errors import CgoLabError, ConfigError, InsufficientData
from .forward import NoiseSpec, dtn_matrix
from .grid import (BumpSum, GaussianBump, Grid, ZeroPotential, build_grid,
                   sample_potential)
from .reconstruct import default_degree_cap, reconstruct

SCHEMA_VERSION = 1

CSV_COLUMNS = ("k", "noise", "dist_proxy", "A", "regime", "T",
               "error_h_minus_s", "error_torus", "I1", "I2", "I3",
               "mean_probe_error_estimate", "truncation_warnings",
               "error_tag")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def potential_spec_from_dict(d: dict):
    """Potential descriptor from a config mapping."""
    kind = d.get("type")
    if kind == "zero":
        return ZeroPotential()
    if kind == "gaussian":
        return GaussianBump(center=tuple(float(c) for c in d["center"]),
                            width=float(d["width"]),
                            amplitude=float(d["amplitude"]))
    if kind == "sum":
        return BumpSum(bumps=tuple(potential_spec_from_dict(b)
                                   for b in d["bumps"]))
    raise ConfigError(f"unknown potential type {kind!r}")


def _spec_to_dict(spec) -> dict:
    if isinstance(spec, ZeroPotential):
        return {"type": "zero"}
    if isinstance(spec, GaussianBump):
        return {"type": "gaussian", "center": list(spec.center),
                "width": spec.width, "amplitude": spec.amplitude}
    if isinstance(spec, BumpSum):
        return {"type": "sum", "bumps": [_spec_to_dict(b)
                                         for b in spec.bumps]}
    raise ConfigError(f"unknown potential spec {spec!r}")


@dataclass
class SweepConfig:
    q1: object
    q2: object
    extent: float
    n: int
    k_list: list
    noise_list: list
    s: float = 2.0
    R: float | None = None
    p: float = 0.25
    mode: str = "boundary"
    sphere_design: str = "d26"
    radial_count: int = 12
    seed: int = 1234
    noise_scale: str = "dist_squared"
    T_max: float | None = None
    degree_cap: int | None = None
    output_dir: str = "sweep_out"

    def __post_init__(self):
        if self.s <= 1.5:
            raise ConfigError(f"need s > n/2 = 1.5, got {self.s}")
        for k in self.k_list:
            if k < 1.0:
                raise ConfigError(f"need k >= 1, got {k}")
        for eps in self.noise_list:
            if eps != 0.0 and not (0.0 < eps <= 1.0 / math.e):
                raise ConfigError(
                    f"noise level {eps} outside (0, 1/e] and not zero")
        if self.mode not in ("oracle", "boundary"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    def physics_dict(self) -> dict:
        """Every field that affects record values (output_dir excluded)."""
        return {
            "q1": _spec_to_dict(self.q1), "q2": _spec_to_dict(self.q2),
            "extent": self.extent, "n": self.n,
            "k_list": [float(k) for k in self.k_list],
            "noise_list": [float(e) for e in self.noise_list],
            "s": self.s, "R": self.R, "p": self.p, "mode": self.mode,
            "sphere_design": self.sphere_design,
            "radial_count": self.radial_count, "seed": self.seed,
            "noise_scale": self.noise_scale, "T_max": self.T_max,
            "degree_cap": self.degree_cap,
            "schema_version": SCHEMA_VERSION,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.physics_dict(), sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:16]


def sweep_config_from_dict(d: dict) -> SweepConfig:
    try:
        grid_d = d["grid"]
        return SweepConfig(
            q1=potential_spec_from_dict(d["q1"]),
            q2=potential_spec_from_dict(d["q2"]),
            extent=float(grid_d["extent"]), n=int(grid_d["n"]),
            k_list=[float(k) for k in d["k_list"]],
            noise_list=[float(e) for e in d["noise_list"]],
            s=float(d.get("s", 2.0)),
            R=None if d.get("R") is None else float(d["R"]),
            p=float(d.get("p", 0.25)),
            mode=d.get("mode", "boundary"),
            sphere_design=d.get("sphere_design", "d26"),
            radial_count=int(d.get("radial_count", 12)),
            seed=int(d.get("seed", 1234)),
            noise_scale=d.get("noise_scale", "dist_squared"),
            T_max=None if d.get("T_max") is None else float(d["T_max"]),
            degree_cap=(None if d.get("degree_cap") is None
                        else int(d["degree_cap"])),
            output_dir=d.get("output_dir", "sweep_out"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}") from exc


@dataclass
class StabilityRecord:
    k: float
    noise: float
    dist_proxy: float = 0.0
    A: float = 0.0
    regime: str = ""
    T: float = 0.0
    error_h_minus_s: float = 0.0
    error_torus: float = 0.0
    I1: float = 0.0
    I2: float = 0.0
    I3: float = 0.0
    mean_probe_error_estimate: float = 0.0
    truncation_warnings: int = 0
    wall_time: float = 0.0
    error_tag: str = ""


def _cell_seed(base_seed: int, ik: int, ie: int) -> int:
    return base_seed + 1009 * ik + 9973 * ie


def _cell_path(out: Path, chash: str, ik: int, ie: int) -> Path:
    return out / f"cell_{chash}_k{ik}_e{ie}.json"


def _record_from_result(k, eps, res, wall) -> StabilityRecord:
    ests = [s.error_estimate for s in res.samples.samples
            if s.error_estimate is not None]
    return StabilityRecord(
        k=float(k), noise=float(eps), dist_proxy=res.dist_proxy,
        A=res.dist_proxy**2, regime=res.regime, T=res.T,
        error_h_minus_s=res.error_h_minus_s, error_torus=res.error_torus,
        I1=res.diagnostics["I1"], I2=res.diagnostics["I2"],
        I3=res.diagnostics["I3"],
        mean_probe_error_estimate=float(np.mean(ests)) if ests else 0.0,
        truncation_warnings=res.diagnostics["truncation_warnings"],
        wall_time=wall)


def run_sweep(config: SweepConfig, workers: int | None = None):
    """All (k, epsilon) cells; failures are tagged, not fatal, unless the
    configuration itself is invalid.  Returns records sorted by (k, noise).
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    with open(out / "config.json", "w") as fh:
        json.dump(config.physics_dict(), fh, indent=2, sort_keys=True)

    grid = build_grid(config.extent, config.n)
    q1 = sample_potential(config.q1, grid, s=config.s)
    q2 = sample_potential(config.q2, grid, s=config.s)

    dtn_cache: dict = {}

    def matrices_for(k: float):
        if config.mode != "boundary":
            return None, None
        if k not in dtn_cache:
            cap = (config.degree_cap if config.degree_cap is not None
                   else default_degree_cap(grid, k, config.R
                                           if config.R is not None else 4.0))
            dtn_cache[k] = (dtn_matrix(q1, k, cap), dtn_matrix(q2, k, cap))
        return dtn_cache[k]

    def run_cell(ik_ie):
        ik, ie = ik_ie
        k = float(config.k_list[ik])
        eps = float(config.noise_list[ie])
        path = _cell_path(out, chash, ik, ie)
        if path.exists():
            with open(path) as fh:
                return StabilityRecord(**json.load(fh))
        m1, m2 = matrices_for(k)
        t0 = time.perf_counter()
        try:
            res = reconstruct(
                q1, q2, k, R=config.R, p=config.p,
                noise=(NoiseSpec(eps, _cell_seed(config.seed, ik, ie))
                       if eps > 0 else None),
                mode=config.mode, degree_cap=config.degree_cap,
                radial_count=config.radial_count,
                sphere_design_name=config.sphere_design,
                T_max=config.T_max, noise_scale=config.noise_scale,
                dtn1=m1, dtn2=m2)
            rec = _record_from_result(k, eps, res,
                                      time.perf_counter() - t0)
        except CgoLabError as exc:
            rec = StabilityRecord(k=k, noise=eps, error_tag=repr(exc),
                                  wall_time=time.perf_counter() - t0)
        with open(path, "w") as fh:
            json.dump(asdict(rec), fh, sort_keys=True)
        return rec

    cells = [(ik, ie) for ik in range(len(config.k_list))
             for ie in range(len(config.noise_list))]
    if workers is None:
        workers = int(os.environ.get("CGOLAB_WORKERS", "1"))
    if workers > 1:
        # DtN matrices are shared read-only; prebuild serially first
        for k in config.k_list:
            matrices_for(float(k))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_cell, cells))
    else:
        records = [run_cell(c) for c in cells]
    records.sort(key=lambda r: (r.k, r.noise))
    return records


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass
class FitReport:
    lipschitz_k: float
    lipschitz_slope: float
    lipschitz_residual: float
    log_regime_eps: float
    log_regime_slope: float
    log_regime_residual: float
    conforming: bool


def _ls_slope(x: np.ndarray, y: np.ndarray):
    coef, res = np.polyfit(x, y, 1, full=True)[:2]
    resid = float(res[0]) if len(res) else 0.0
    return float(coef[0]), resid


def fit_stability(records) -> FitReport:
    """Two log-log fits: error vs epsilon at the largest k (Lipschitz-type
    regime) and error vs (k + log(1/epsilon)) at the smallest positive
    epsilon (logarithmic regime)."""
    good = [r for r in records if not r.error_tag and r.noise > 0
            and r.error_h_minus_s > 0]
    ks = sorted({r.k for r in good})
    eps_levels = sorted({r.noise for r in good})
    if len(eps_levels) < 3 or len(ks) < 2:
        raise InsufficientData(
            f"need >= 3 noise levels at >= 2 k values, have "
            f"{len(eps_levels)} levels, {len(ks)} k values")

    k_big = ks[-1]
    sub = sorted((r for r in good if r.k == k_big), key=lambda r: r.noise)
    if len(sub) < 3:
        raise InsufficientData(f"only {len(sub)} usable cells at k={k_big}")
    lip_slope, lip_res = _ls_slope(
        np.log([r.noise for r in sub]),
        np.log([r.error_h_minus_s for r in sub]))

    eps_small = eps_levels[0]
    sub2 = sorted((r for r in good if r.noise == eps_small),
                  key=lambda r: r.k)
    if len(sub2) < 2:
        raise InsufficientData(
            f"only {len(sub2)} usable cells at eps={eps_small}")
    log_slope, log_res = _ls_slope(
        np.log([r.k + math.log(1.0 / r.noise) for r in sub2]),
        np.log([r.error_h_minus_s for r in sub2]))

    conforming = lip_slope > 0.1 or log_slope < -0.1
    return FitReport(k_big, lip_slope, lip_res, eps_small, log_slope,
                     log_res, conforming)


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def write_records_csv(path, records) -> None:
    """Frozen column order; float cells via repr for bit-stable output.
    Wall time is deliberately not a column (it breaks determinism)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_COLUMNS)
        for r in records:
            wr.writerow([
                repr(r.k), repr(r.noise), repr(r.dist_proxy), repr(r.A),
                r.regime, repr(r.T), repr(r.error_h_minus_s),
                repr(r.error_torus), repr(r.I1), repr(r.I2), repr(r.I3),
                repr(r.mean_probe_error_estimate),
                str(r.truncation_warnings), r.error_tag])


def read_records_csv(path):
    records = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            records.append(StabilityRecord(
                k=float(row["k"]), noise=float(row["noise"]),
                dist_proxy=float(row["dist_proxy"]), A=float(row["A"]),
                regime=row["regime"], T=float(row["T"]),
                error_h_minus_s=float(row["error_h_minus_s"]),
                error_torus=float(row["error_torus"]),
                I1=float(row["I1"]), I2=float(row["I2"]),
                I3=float(row["I3"]),
                mean_probe_error_estimate=float(
                    row["mean_probe_error_estimate"]),
                truncation_warnings=int(row["truncation_warnings"]),
                error_tag=row["error_tag"]))
    return records


def render_report(records, fit: FitReport | None, output_dir) -> dict:
    """CSV of records, JSON fit report and two SVG plot families with
    deterministic file names."""
    if not records:
        raise ConfigError("no records to report")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    csv_path = out / "records.csv"
    write_records_csv(csv_path, records)
    paths["csv"] = str(csv_path)

    if fit is not None:
        fit_path = out / "fit.json"
        doc = asdict(fit)
        doc["schema_version"] = SCHEMA_VERSION
        with open(fit_path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        paths["fit"] = str(fit_path)

    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "cgolab"
    import matplotlib.pyplot as plt

    good = [r for r in records if not r.error_tag]

    fig, ax = plt.subplots(figsize=(5.5, 4))
    for k in sorted({r.k for r in good}):
        sub = sorted((r for r in good if r.k == k and r.noise > 0),
                     key=lambda r: r.noise)
        if sub:
            ax.loglog([r.noise for r in sub],
                      [r.error_h_minus_s for r in sub],
                      marker="o", label=f"k={k:g}")
    ax.set_xlabel("noise epsilon")
    ax.set_ylabel("H^{-s} error")
    ax.legend()
    p1 = out / "error_vs_eps.svg"
    fig.savefig(p1, metadata={"Date": None})
    plt.close(fig)
    paths["error_vs_eps"] = str(p1)

    fig, ax = plt.subplots(figsize=(5.5, 4))
    for eps in sorted({r.noise for r in good}):
        sub = sorted((r for r in good if r.noise == eps),
                     key=lambda r: r.k)
        if sub:
            ax.semilogy([r.k for r in sub],
                        [r.error_h_minus_s for r in sub],
                        marker="s", label=f"eps={eps:g}")
    ax.set_xlabel("k")
    ax.set_ylabel("H^{-s} error")
    ax.legend()
    p2 = out / "error_vs_k.svg"
    fig.savefig(p2, metadata={"Date": None})
    plt.close(fig)
    paths["error_vs_k"] = str(p2)
    return paths
