"""Complex geometrical optics solutions.

Builds solutions u = exp(i zeta . x) (1 + psi) of (Laplace + k^2 + q) u = 0
for complex probing vectors zeta = eta + i xi with |eta|^2 = k^2 + |xi|^2
and eta . xi = 0.  The correction psi solves the conjugated equation

    (Laplace + 2 i zeta . grad) psi = -q (1 + psi)

and is obtained by fixed-point iteration, inverting the conjugated
Laplacian as a Fourier multiplier on a half-step shifted frequency lattice
(the shift, applied along the axis most aligned with xi, keeps the symbol
-(|mu|^2 + 2 zeta . mu) away from zero).

Probing-vector pairs are generated from a direction omega and parameters
(k, r, a) via

    xi_1 = a w_perp,   eta_1 = -(r/2) omega + sqrt(k^2 + a^2 - r^2/4) w_tld,
    xi_2 = -xi_1,      eta_2 = -r omega - eta_1,

so that zeta_1 + zeta_2 = -r omega; this requires k^2 + a^2 > r^2 / 4.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import (ConfigError, DegenerateSymbol, InvalidFrequencyRange,
                     NoContraction)
from .grid import (Grid, Potential, ScalarField, field_from_core, l2_norm,
                   read_field, write_field)


@dataclass(frozen=True)
class ZetaVector:
    """One probing vector zeta = eta + i xi with zeta . zeta = k^2."""

    eta: np.ndarray
    xi: np.ndarray
    k: float

    def __post_init__(self):
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float))
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        if self.k < 1.0:
            raise ConfigError(f"wave number must be >= 1, got {self.k}")
        e2, x2 = self.eta @ self.eta, self.xi @ self.xi
        if abs(e2 - self.k**2 - x2) > 1e-10 * max(e2, 1.0):
            raise ConfigError("|eta|^2 != k^2 + |xi|^2")
        if abs(self.eta @ self.xi) > 1e-10 * max(
                np.sqrt(e2 * x2), 1e-300):
            raise ConfigError("eta . xi != 0")

    @property
    def zeta(self) -> np.ndarray:
        return self.eta + 1j * self.xi

    @property
    def xi_norm(self) -> float:
        return float(np.linalg.norm(self.xi))


@dataclass(frozen=True)
class ZetaPair:
    """Probing pair with zeta_1 + zeta_2 = -r omega."""

    zeta1: ZetaVector
    zeta2: ZetaVector
    omega: np.ndarray
    frame: tuple  # (w_perp, w_tld)
    r: float
    a: float


def _complete_frame(omega: np.ndarray, seed: np.ndarray | None):
    """Deterministic orthonormal pair completing omega, by Gram-Schmidt of a
    fallback axis (or the given seed) against omega."""
    if seed is None:
        seed = np.zeros(3)
        seed[int(np.argmin(np.abs(omega)))] = 1.0
    w = seed - (seed @ omega) * omega
    nw = np.linalg.norm(w)
    if nw < 1e-8:
        raise ConfigError("frame seed is (nearly) parallel to omega")
    w_perp = w / nw
    w_tld = np.cross(omega, w_perp)
    return w_perp, w_tld


def make_zeta_pair(k: float, r: float, omega, a: float,
                   frame_seed=None) -> ZetaPair:
    """Probing-vector pair for direction omega and parameters (k, r, a)."""
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise ConfigError(f"omega must be a unit vector, |omega| = "
                          f"{np.linalg.norm(omega)}")
    if r < 0 or a <= 0:
        raise ConfigError(f"need r >= 0 and a > 0, got r={r}, a={a}")
    disc = k**2 + a**2 - r**2 / 4.0
    if disc <= 0:
        raise InvalidFrequencyRange(
            f"k^2 + a^2 = {k**2 + a**2} <= r^2/4 = {r**2 / 4}")
    seed = None if frame_seed is None else np.asarray(frame_seed, dtype=float)
    w_perp, w_tld = _complete_frame(omega, seed)
    xi1 = a * w_perp
    eta1 = -(r / 2.0) * omega + np.sqrt(disc) * w_tld
    z1 = ZetaVector(eta1, xi1, k)
    z2 = ZetaVector(-r * omega - eta1, -xi1, k)
    return ZetaPair(z1, z2, omega, (w_perp, w_tld), float(r), float(a))


# ---------------------------------------------------------------------------
# Fourier-multiplier inversion of the conjugated Laplacian
# ---------------------------------------------------------------------------

def lattice_shift(zeta: ZetaVector, grid: Grid) -> np.ndarray:
    """Half frequency-step offset along the axis most aligned with xi."""
    axis = int(np.argmax(np.abs(zeta.xi)))
    delta = np.zeros(3)
    delta[axis] = np.pi / (2.0 * grid.extent)
    return delta


class _FaddeevWorkspace:
    """Phase grids and symbol for one (zeta, grid) combination."""

    def __init__(self, zeta: ZetaVector, grid: Grid):
        self.zeta = zeta
        self.grid = grid
        self.delta = lattice_shift(zeta, grid)
        n = grid.points_per_axis
        x = grid.nodes()[:n]
        # exp(-i delta . x) factored per axis
        ph = [np.exp(-1j * self.delta[i] * x) for i in range(3)]
        self.phase_conj = (ph[0][:, None, None] * ph[1][None, :, None]
                           * ph[2][None, None, :])
        self.phase = np.conj(self.phase_conj)
        mu1 = grid.torus_frequencies()
        mx = (mu1 + self.delta[0])[:, None, None]
        my = (mu1 + self.delta[1])[None, :, None]
        mz = (mu1 + self.delta[2])[None, None, :]
        mu2 = mx**2 + my**2 + mz**2
        zdotmu = (zeta.zeta[0] * mx + zeta.zeta[1] * my + zeta.zeta[2] * mz)
        self.symbol = -(mu2 + 2.0 * zdotmu)
        self.weight_base = 1.0 + mu2  # for shifted-lattice Sobolev norms
        self.min_symbol = float(np.min(np.abs(self.symbol)))

    def check(self):
        if self.min_symbol < 1e-12 * (1.0 + self.zeta.xi_norm):
            raise DegenerateSymbol(
                f"min |symbol| = {self.min_symbol} on shifted lattice")

    def invert_core(self, core: np.ndarray) -> np.ndarray:
        g = np.fft.fftn(core * self.phase_conj)
        return np.fft.ifftn(g / self.symbol) * self.phase

    def apply_core(self, core: np.ndarray) -> np.ndarray:
        g = np.fft.fftn(core * self.phase_conj)
        return np.fft.ifftn(g * self.symbol) * self.phase

    def assemble(self, core: np.ndarray) -> ScalarField:
        """Full (n+1)^3 field; the wrap layer along the shifted axis picks
        up the anti-periodic phase exp(i delta 2L) = -1."""
        f = field_from_core(self.grid, core, kind="periodic")
        n = self.grid.points_per_axis
        axis = int(np.argmax(self.delta))
        sl = [slice(None)] * 3
        sl[axis] = n
        f.values[tuple(sl)] *= -1.0
        return f

    def h_s_norm(self, core: np.ndarray, s: float) -> float:
        coeff = np.fft.fftn(core * self.phase_conj) * self.grid.spacing**3
        total = (np.sum(self.weight_base**s * np.abs(coeff)**2)
                 / (2.0 * self.grid.extent)**3)
        return float(np.sqrt(total))


def faddeev_invert(zeta: ZetaVector, rhs: ScalarField) -> ScalarField:
    """Invert Laplace + 2 i zeta . grad on the shifted frequency lattice."""
    ws = _FaddeevWorkspace(zeta, rhs.grid)
    ws.check()
    return ws.assemble(ws.invert_core(rhs.core))


def faddeev_apply(zeta: ZetaVector, f: ScalarField) -> ScalarField:
    """Forward conjugated Laplacian on the shifted lattice (round-trip
    partner of :func:`faddeev_invert`)."""
    ws = _FaddeevWorkspace(zeta, f.grid)
    return ws.assemble(ws.apply_core(f.core))


# ---------------------------------------------------------------------------
# fixed-point construction of the correction psi
# ---------------------------------------------------------------------------

@dataclass
class CGOSolution:
    """CGO correction psi with its probing vector and diagnostics.

    psi is stored on the full node grid; along the lattice-shift axis the
    wrap layer is anti-periodic (phase -1), consistent with the shifted
    Fourier representation.  psi_h_s_norm is computed with the shifted
    lattice weights.
    """

    zeta: ZetaVector
    psi: ScalarField
    residual: float
    iterations: int
    psi_h_s_norm: float


def build_cgo(q: Potential, zeta: ZetaVector, tol: float = 1e-10,
              max_iter: int = 60) -> CGOSolution:
    """Fixed point psi <- -G_zeta[ q (1 + psi) ].

    Raises NoContraction when the successive-residual ratio stays above 0.9
    for 5 straight iterations or max_iter is exhausted, i.e. |xi| is too
    small relative to ||q||.
    """
    if tol < 1e-12:
        raise ConfigError(f"tol must be >= 1e-12, got {tol}")
    grid = q.grid
    ws = _FaddeevWorkspace(zeta, grid)
    ws.check()
    qc = q.field.core
    h3 = grid.spacing**3

    psi = np.zeros_like(qc)
    prev_res = None
    strikes = 0
    contracted = False
    for it in range(1, max_iter + 1):
        new = ws.invert_core(-qc * (1.0 + psi))
        res = float(np.sqrt(np.sum(np.abs(new - psi)**2) * h3))
        psi = new
        if res <= tol:
            return CGOSolution(zeta, ws.assemble(psi), res, it,
                               ws.h_s_norm(psi, q.s))
        if prev_res is not None and prev_res > 0:
            ratio = res / prev_res
            if ratio <= 0.9:
                contracted = True
                strikes = 0
            else:
                strikes += 1
                if contracted and ratio > 1.0:
                    raise NoContraction(
                        f"residual grew (ratio {ratio:.3f}) after an initial "
                        f"contraction phase at iteration {it}")
                if strikes >= 5:
                    raise NoContraction(
                        f"no contraction for 5 straight iterations "
                        f"(last ratio {ratio:.3f}); |xi| = {zeta.xi_norm} "
                        f"too small for ||q|| = {q.h_s_norm:.3g}")
        prev_res = res
    raise NoContraction(f"max_iter = {max_iter} exhausted, residual {res:.3g}")


def cgo_field(sol: CGOSolution, grid: Grid) -> ScalarField:
    """Grid samples of u = exp(i zeta . x) (1 + psi)."""
    if grid != sol.psi.grid:
        raise ConfigError("grid mismatch between solution and target grid")
    z = sol.zeta.zeta
    x = grid.nodes()
    ph = [np.exp(1j * z[i] * x) for i in range(3)]
    expo = ph[0][:, None, None] * ph[1][None, :, None] * ph[2][None, None, :]
    return ScalarField(grid, expo * (1.0 + sol.psi.values), kind="interior")


def estimate_cstar(q: Potential, k: float, a_min: float = 0.25,
                   a_max: float = 256.0, probe_iters: int = 15,
                   rel_width: float = 0.05) -> float:
    """Empirical contraction constant: bisect for the smallest a at which
    the fixed point contracts, returned as a / ||q||_{H^s}.

    Returns 0.0 for the zero potential and +inf if even a_max fails.
    """
    if q.h_s_norm == 0.0:
        return 0.0
    omega = np.array([1.0, 0.0, 0.0])

    def contracts(a: float) -> bool:
        pair = make_zeta_pair(k, 0.0, omega, a)
        try:
            build_cgo(q, pair.zeta1, tol=1e-10, max_iter=probe_iters)
        except NoContraction:
            return False
        return True

    if contracts(a_min):
        return a_min / q.h_s_norm
    if not contracts(a_max):
        return float("inf")
    lo, hi = a_min, a_max
    while (hi - lo) > rel_width * hi:
        mid = np.sqrt(lo * hi)
        if contracts(mid):
            hi = mid
        else:
            lo = mid
    return hi / q.h_s_norm


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_cgo_solution(f: BinaryIO, sol: CGOSolution) -> None:
    """Field format preceded by a header of little-endian doubles:
    eta (3), xi (3), k, residual, iterations."""
    vals = [*sol.zeta.eta, *sol.zeta.xi, sol.zeta.k, sol.residual,
            float(sol.iterations)]
    f.write(struct.pack("<9d", *vals))
    write_field(f, sol.psi)


def read_cgo_solution(f: BinaryIO) -> CGOSolution:
    vals = struct.unpack("<9d", f.read(72))
    zeta = ZetaVector(np.array(vals[0:3]), np.array(vals[3:6]), vals[6])
    psi = read_field(f, kind="periodic")
    ws = _FaddeevWorkspace(zeta, psi.grid)
    return CGOSolution(zeta, psi, vals[7], int(vals[8]),
                       ws.h_s_norm(psi.core, 2.0))
