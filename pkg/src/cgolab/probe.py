"""Alessandrini pairing and Fourier probing of the potential difference.

For a probing pair (zeta_1, zeta_2) with zeta_1 + zeta_2 = -r omega, the
product of the two CGO solutions is exp(-i r omega . x)(1+psi_1)(1+psi_2),
so the volume pairing integral (q_1 - q_2) u_1 u_2 dx approximates the
Fourier transform F(q_1 - q_2)(r omega) up to terms controlled by
||psi_l|| ~ 1/a.

Two probe modes:
  oracle   -- volume quadrature with the constructed psi_l; isolates the
              1/a probing error (simulation ground truth);
  boundary -- bilinear DtN-difference evaluation on the projected CGO
              traces; adds basis truncation and measurement noise, and is
              the implementable reconstruction route.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field as dc_field
from typing import BinaryIO, Iterable

import numpy as np

from .cgo import ZetaPair, build_cgo, cgo_field, make_zeta_pair
from .errors import CgoLabError, ConfigError
from .forward import (CauchyPair, DtNMatrix, bilinear_eval, boundary_basis,
                      project_boundary)
from .grid import (Grid, Potential, ScalarField, boundary_trace, l2_norm,
                   sobolev_norm)

SAMPLES_MAGIC = b"CGOFSS01"


# ---------------------------------------------------------------------------
# pairing and bound
# ---------------------------------------------------------------------------

def alessandrini_lhs(q1: Potential, q2: Potential, u1: ScalarField,
                     u2: ScalarField) -> complex:
    """Volume pairing integral of (q2 - q1) u1 u2 by the grid midpoint rule."""
    if not (q1.grid == q2.grid == u1.grid == u2.grid):
        raise ConfigError("grid mismatch in Alessandrini pairing")
    h = q1.grid.spacing
    qd = q2.field.core.real - q1.field.core.real
    return complex(np.sum(qd * u1.core * u2.core) * h**3)


def alessandrini_bound(c1: CauchyPair, c2: CauchyPair,
                       dist_value: float) -> float:
    """Product of the Cauchy graph norms times the distance value."""
    return c1.norm_cache * c2.norm_cache * dist_value


# ---------------------------------------------------------------------------
# sphere designs
# ---------------------------------------------------------------------------

def _octahedral_design():
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    w = np.full(6, 4.0 * np.pi / 6.0)
    return dirs, w


def _d26_design():
    """26-point 7th-degree formula: vertex, edge and face directions of the
    cube with the classical weights 1/21, 4/105, 9/280 (times 4 pi)."""
    dirs, w = [], []
    for i in range(3):
        for s in (1.0, -1.0):
            v = np.zeros(3)
            v[i] = s
            dirs.append(v)
            w.append(1.0 / 21.0)
    for i in range(3):
        j, l = (i + 1) % 3, (i + 2) % 3
        for s1 in (1.0, -1.0):
            for s2 in (1.0, -1.0):
                v = np.zeros(3)
                v[j], v[l] = s1, s2
                dirs.append(v / np.sqrt(2.0))
                w.append(4.0 / 105.0)
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            for s3 in (1.0, -1.0):
                dirs.append(np.array([s1, s2, s3]) / np.sqrt(3.0))
                w.append(9.0 / 280.0)
    return np.array(dirs), 4.0 * np.pi * np.array(w)


SPHERE_DESIGNS = {"octahedral": _octahedral_design, "d26": _d26_design}


def sphere_design(name: str):
    """(directions, weights) with weights summing to 4 pi."""
    if name not in SPHERE_DESIGNS:
        raise ConfigError(f"unknown sphere design {name!r}; "
                          f"options {sorted(SPHERE_DESIGNS)}")
    return SPHERE_DESIGNS[name]()


def radial_rule(T: float, count: int, kind: str = "gauss"):
    """Radial nodes and weights on [0, T].

    'gauss' is Gauss-Legendre (spectrally accurate, the production choice);
    'uniform' is the left-endpoint rectangle rule, first-order by design,
    useful for exhibiting clean rate-1 convergence in refinement studies.
    """
    if kind == "gauss":
        x, w = np.polynomial.legendre.leggauss(count)
        return 0.5 * T * (x + 1.0), 0.5 * T * w
    if kind == "uniform":
        step = T / count
        return step * np.arange(count), np.full(count, step)
    raise ConfigError(f"unknown radial rule {kind!r}")


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------

@dataclass
class FourierSample:
    r: float
    omega: np.ndarray
    a: float
    value: complex
    mode: str
    error_estimate: float | None = None
    truncation_warning: bool = False
    failed: bool = False


@dataclass
class FourierSampleSet:
    samples: list
    T: float
    k: float
    R: float
    mode: str
    noise_epsilon: float = 0.0
    radii: np.ndarray | None = None
    radial_weights: np.ndarray | None = None
    directions: np.ndarray | None = None
    direction_weights: np.ndarray | None = None
    failures: list = dc_field(default_factory=list)


def plane_wave_values(grid: Grid, kvec: np.ndarray) -> np.ndarray:
    """exp(i kvec . x) on the full node grid, built separably."""
    x = grid.nodes()
    p = [np.exp(1j * kvec[i] * x) for i in range(3)]
    return p[0][:, None, None] * p[1][None, :, None] * p[2][None, None, :]


def fourier_probe(q1: Potential, q2: Potential, k: float, r: float,
                  omega, a: float, mode: str = "oracle",
                  dtn1: DtNMatrix | None = None,
                  dtn2: DtNMatrix | None = None,
                  c_emp: float = 1.0, cgo_tol: float = 1e-10,
                  q_diff_h_minus_s: float | None = None) -> FourierSample:
    """Single probe of F(q1 - q2)(r omega) with probing parameter a.

    boundary mode evaluates -<(Lambda_1 - Lambda_2) P f1, P f2> on the
    projected CGO traces and requires the two DtN matrices (noise, if any,
    is already inside them); oracle mode integrates against the constructed
    CGO corrections directly.
    """
    if mode not in ("oracle", "boundary"):
        raise ConfigError(f"unknown probe mode {mode!r}")
    omega = np.asarray(omega, dtype=float)
    grid = q1.grid
    pair = make_zeta_pair(k, r, omega, a)
    s1 = build_cgo(q1, pair.zeta1, tol=cgo_tol)
    s2 = build_cgo(q2, pair.zeta2, tol=cgo_tol)

    if q_diff_h_minus_s is None:
        diff = ScalarField(grid, q1.field.values - q2.field.values,
                           kind="interior")
        q_diff_h_minus_s = sobolev_norm(diff, -q1.s)
    err_est = c_emp / a * q_diff_h_minus_s

    if mode == "oracle":
        h = grid.spacing
        qd = q1.field.core.real - q2.field.core.real
        phase = plane_wave_values(grid, -r * omega)[:grid.n, :grid.n, :grid.n]
        prod = (1.0 + s1.psi.core) * (1.0 + s2.psi.core)
        value = complex(np.sum(qd * phase * prod) * h**3)
        return FourierSample(r, omega, a, value, "oracle", err_est)

    if dtn1 is None or dtn2 is None:
        raise ConfigError("boundary mode requires both DtN matrices")
    basis = dtn1.basis
    f1 = boundary_trace(cgo_field(s1, grid))
    f2 = boundary_trace(cgo_field(s2, grid))
    c1, ret1 = project_boundary(f1, basis)
    c2, ret2 = project_boundary(f2, basis)
    warn = min(ret1, ret2) < 0.9
    value = -(bilinear_eval(dtn1, c1, c2) - bilinear_eval(dtn2, c1, c2))
    return FourierSample(r, omega, a, value, "boundary", err_est, warn)


def acquire_samples(q1: Potential, q2: Potential, k: float, R: float,
                    T: float, radial_count: int = 16,
                    sphere_design_name: str = "d26", mode: str = "oracle",
                    dtn1: DtNMatrix | None = None,
                    dtn2: DtNMatrix | None = None,
                    c_emp: float = 1.0,
                    noise_epsilon: float = 0.0,
                    cgo_tol: float = 1e-10) -> FourierSampleSet:
    """One probe per (r_i, omega_j) on the polar grid, with a chosen by the
    small-r/large-r rule a = R for r <= k + R, a = r beyond.

    Individual probe failures are collected; the acquisition fails only if
    more than 20% of the samples error out.
    """
    from .reconstruct import choose_a  # deferred: reconstruction layers on us

    radii, rw = radial_rule(T, radial_count)
    dirs, dw = sphere_design(sphere_design_name)
    diff = ScalarField(q1.grid, q1.field.values - q2.field.values,
                       kind="interior")
    qd_norm = sobolev_norm(diff, -q1.s)

    samples = []
    failures = []
    total = 0
    for r in radii:
        a = choose_a(float(r), k, R)
        for om in dirs:
            total += 1
            try:
                samples.append(fourier_probe(
                    q1, q2, k, float(r), om, a, mode=mode, dtn1=dtn1,
                    dtn2=dtn2, c_emp=c_emp, cgo_tol=cgo_tol,
                    q_diff_h_minus_s=qd_norm))
            except CgoLabError as exc:
                # placeholder keeps the polar design complete; a zero value
                # simply drops this node from the synthesis
                samples.append(FourierSample(float(r), np.asarray(om), a,
                                             0.0j, mode, None, False, True))
                failures.append((float(r), tuple(om), repr(exc)))
    if len(failures) > 0.2 * total:
        raise ConfigError(
            f"{len(failures)}/{total} probes failed; first: {failures[0]}")
    return FourierSampleSet(samples, T, k, R, mode, noise_epsilon,
                            radii, rw, dirs, dw, failures)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

CSV_FIELDS = ("r", "omega1", "omega2", "omega3", "a", "re_value", "im_value",
              "mode", "error_estimate", "failed")


def write_samples_csv(path, sset: FourierSampleSet) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_FIELDS)
        for s in sset.samples:
            wr.writerow([repr(float(s.r)), repr(float(s.omega[0])),
                         repr(float(s.omega[1])), repr(float(s.omega[2])),
                         repr(float(s.a)), repr(s.value.real),
                         repr(s.value.imag), s.mode,
                         "" if s.error_estimate is None
                         else repr(float(s.error_estimate)),
                         int(s.failed)])


def write_samples_bin(f: BinaryIO, sset: FourierSampleSet) -> None:
    """Binary block: magic, count (i32), then per sample r, omega (3), a,
    re, im, error_estimate as little-endian doubles plus a mode byte."""
    f.write(SAMPLES_MAGIC)
    f.write(struct.pack("<i", len(sset.samples)))
    f.write(struct.pack("<3d", sset.T, sset.k, sset.R))
    for s in sset.samples:
        f.write(struct.pack("<8d", s.r, *s.omega, s.a, s.value.real,
                            s.value.imag,
                            -1.0 if s.error_estimate is None
                            else s.error_estimate))
        f.write(b"O" if s.mode == "oracle" else b"B")
        f.write(b"\x01" if s.failed else b"\x00")


def read_samples_bin(f: BinaryIO) -> FourierSampleSet:
    magic = f.read(8)
    if magic != SAMPLES_MAGIC:
        raise ConfigError(f"bad sample-set magic {magic!r}")
    (count,) = struct.unpack("<i", f.read(4))
    T, k, R = struct.unpack("<3d", f.read(24))
    samples = []
    for _ in range(count):
        vals = struct.unpack("<8d", f.read(64))
        mode = "oracle" if f.read(1) == b"O" else "boundary"
        failed = f.read(1) == b"\x01"
        err = None if vals[7] < 0 else vals[7]
        samples.append(FourierSample(vals[0], np.array(vals[1:4]), vals[4],
                                     complex(vals[5], vals[6]), mode, err,
                                     False, failed))
    return FourierSampleSet(samples, T, k, R, samples[0].mode if samples
                            else "oracle")
