"""Command-line entry points for the lab.

Subcommands: cgo-check, forward-check, probe, reconstruct, sweep, fit,
report.  Exit codes: 0 success, 2 configuration error, 3 partial failures
or failed checks.  Worker count for sweeps comes from CGOLAB_WORKERS.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
import yaml

from .cgo import build_cgo, make_zeta_pair
from .errors import CgoLabError, ConfigError
from .forward import NoiseSpec, solve_dirichlet
from .grid import (GaussianBump, ZeroPotential, boundary_trace, build_grid,
                   field_from_function, sample_potential)
from .probe import fourier_probe, write_samples_csv
from .reconstruct import reconstruct, save_result
from .sweep import (fit_stability, read_records_csv, render_report,
                    run_sweep, sweep_config_from_dict)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} is not a mapping")
    return doc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_cgo_check(args) -> int:
    """psi-decay battery: slope of ||psi|| vs a should be near -1."""
    grid = build_grid(args.extent, args.n)
    q = sample_potential(GaussianBump(center=(0.1, -0.05, 0.0),
                                      width=0.3, amplitude=args.amplitude),
                         grid)
    a_list = [float(a) for a in args.a_list.split(",")]
    norms = []
    for a in a_list:
        pair = make_zeta_pair(args.k, 0.0, np.array([0.0, 1.0, 0.0]), a)
        sol = build_cgo(q, pair.zeta1)
        norms.append(sol.psi_h_s_norm)
        print(f"a={a:8.2f}  ||psi||_Hs={sol.psi_h_s_norm:.6e}  "
              f"iters={sol.iterations}  residual={sol.residual:.2e}")
    slope = float(np.polyfit(np.log(a_list), np.log(norms), 1)[0])
    print(f"log-log slope: {slope:.4f}  (expect about -1)")
    ok = -1.3 <= slope <= -0.7
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_forward_check(args) -> int:
    """Plane-wave manufactured solution: observed convergence order of the
    interior error between two grid resolutions."""
    k = args.k
    d = np.array([1.0, 0.0, 0.0]) * k
    errs = []
    for n in (args.n, 2 * args.n):
        grid = build_grid(args.extent, n)
        q = sample_potential(ZeroPotential(), grid)
        exact = field_from_function(grid, lambda x, y, z: np.exp(
            1j * (d[0] * x + d[1] * y + d[2] * z)))
        f = boundary_trace(exact)
        u = solve_dirichlet(q, k, f)
        err = float(np.max(np.abs(u.values - exact.values)))
        errs.append(err)
        print(f"n={n:4d}  max interior error {err:.6e}")
    order = float(np.log2(errs[0] / errs[1]))
    print(f"observed order: {order:.3f}  (expect about 2)")
    ok = order >= 1.8
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_probe(args) -> int:
    doc = _load_config(args.config)
    cfg = sweep_config_from_dict(doc)
    grid = build_grid(cfg.extent, cfg.n)
    q1 = sample_potential(cfg.q1, grid, s=cfg.s)
    q2 = sample_potential(cfg.q2, grid, s=cfg.s)
    omega = np.array([float(c) for c in args.omega.split(",")])
    omega /= np.linalg.norm(omega)
    sample = fourier_probe(q1, q2, args.k, args.r, omega, args.a,
                           mode="oracle")
    print(json.dumps({
        "r": sample.r, "omega": list(sample.omega), "a": sample.a,
        "value_re": sample.value.real, "value_im": sample.value.imag,
        "error_estimate": sample.error_estimate}, indent=2))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    doc = _load_config(args.config)
    cfg = sweep_config_from_dict(doc)
    grid = build_grid(cfg.extent, cfg.n)
    q1 = sample_potential(cfg.q1, grid, s=cfg.s)
    q2 = sample_potential(cfg.q2, grid, s=cfg.s)
    eps = args.noise
    res = reconstruct(q1, q2, args.k, R=cfg.R, p=cfg.p,
                      noise=NoiseSpec(eps, cfg.seed) if eps > 0 else None,
                      mode=cfg.mode, degree_cap=cfg.degree_cap,
                      radial_count=cfg.radial_count,
                      sphere_design_name=cfg.sphere_design,
                      T_max=cfg.T_max, noise_scale=cfg.noise_scale)
    paths = save_result(res, cfg.output_dir)
    write_samples_csv(f"{cfg.output_dir}/samples.csv", res.samples)
    print(json.dumps({
        "T": res.T, "regime": res.regime, "dist_proxy": res.dist_proxy,
        "error_h_minus_s": res.error_h_minus_s,
        "error_torus": res.error_torus, "artifacts": paths}, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = _load_config(args.config)
    cfg = sweep_config_from_dict(doc)
    records = run_sweep(cfg, workers=args.workers)
    fit = None
    try:
        fit = fit_stability(records)
    except CgoLabError:
        pass  # sweeps too small to fit are still reportable
    render_report(records, fit, cfg.output_dir)
    failures = [r for r in records if r.error_tag]
    for r in records:
        print(f"k={r.k:g} eps={r.noise:g} regime={r.regime or '-'} "
              f"T={r.T:.3f} err={r.error_h_minus_s:.6e} "
              f"{r.error_tag or 'ok'}")
    if failures:
        print(f"{len(failures)}/{len(records)} cells failed")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_fit(args) -> int:
    records = read_records_csv(args.records)
    fit = fit_stability(records)
    print(json.dumps({
        "lipschitz_k": fit.lipschitz_k,
        "lipschitz_slope": fit.lipschitz_slope,
        "lipschitz_residual": fit.lipschitz_residual,
        "log_regime_eps": fit.log_regime_eps,
        "log_regime_slope": fit.log_regime_slope,
        "log_regime_residual": fit.log_regime_residual,
        "conforming": fit.conforming}, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    records = read_records_csv(args.records)
    fit = None
    try:
        fit = fit_stability(records)
    except CgoLabError:
        pass
    paths = render_report(records, fit, args.output_dir)
    print(json.dumps(paths, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cgolab",
        description="numerical lab for CGO-based inverse boundary value "
                    "experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cgo-check", help="psi-decay battery")
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--a-list", default="8,16,32,64")
    p.set_defaults(func=cmd_cgo_check)

    p = sub.add_parser("forward-check", help="manufactured-solution order")
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--extent", type=float, default=1.0)
    p.set_defaults(func=cmd_forward_check)

    p = sub.add_parser("probe", help="single Fourier probe")
    p.add_argument("config")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--omega", default="0,1,0")
    p.add_argument("--a", type=float, required=True)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("reconstruct", help="single reconstruction cell")
    p.add_argument("config")
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="full k/noise sweep")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit stability exponents from records")
    p.add_argument("records")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="render report from records")
    p.add_argument("records")
    p.add_argument("--output-dir", default="report_out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CgoLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
