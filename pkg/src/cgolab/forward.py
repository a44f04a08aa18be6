"""Forward Dirichlet solver, Cauchy data, DtN matrices and distance proxy.

The Dirichlet problem for (Laplace + k^2 + q) u = 0 is discretized with the
7-point Laplacian on interior nodes.  The constant-coefficient part
Laplace_h + k^2 diagonalizes in the 3D discrete sine basis (DST-I), which
yields both a direct solver for q = 0 and an effective preconditioner for
GMRES when q != 0.

The boundary data space is spanned by per-face 2D Fourier modes up to a
degree cap; DtN matrices are finite sections of f -> du/dnu over that
basis.  The Cauchy-distance proxy is the H^{1/2} -> H^{-1/2} weighted
operator norm of the DtN difference, normalized by the same norm of the
zero-potential DtN at the same wave number (so the proxy is a metric for a
fixed basis and is dimensionless like the relative set distance it stands
in for).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import BinaryIO

import numpy as np
from scipy.fft import dstn, idstn
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigError, ResonantFrequency
from .grid import (FACE_AXES, FACE_NAMES, BoundaryField, Grid, Potential,
                   ScalarField, boundary_sobolev_norm, boundary_trace,
                   normal_derivative, sample_potential, zero_boundary_field,
                   ZeroPotential)

DTN_MAGIC = b"CGODTN01"

# margin below which k^2 counts as resonant with a discrete eigenvalue
RESONANCE_MARGIN = 1e-8


def potential_id(q: Potential) -> str:
    """Short content hash identifying a sampled potential."""
    hsh = hashlib.sha1()
    hsh.update(np.ascontiguousarray(q.field.values.real).tobytes())
    hsh.update(struct.pack("<d", q.s))
    return hsh.hexdigest()[:12]


# ---------------------------------------------------------------------------
# Dirichlet solver
# ---------------------------------------------------------------------------

class _DirichletWorkspace:
    """DST-I machinery for the interior problem on one grid at one k."""

    def __init__(self, grid: Grid, k: float):
        self.grid = grid
        self.k = k
        n = grid.points_per_axis
        h = grid.spacing
        j = np.arange(1, n)
        lam = (2.0 * np.cos(np.pi * j / n) - 2.0) / h**2
        sym = (lam[:, None, None] + lam[None, :, None] + lam[None, None, :]
               + k**2)
        self.min_gap = float(np.min(np.abs(sym)))
        if self.min_gap < RESONANCE_MARGIN * max(1.0, k**2):
            raise ResonantFrequency(
                f"k^2 = {k**2} within {self.min_gap:.3g} of a discrete "
                f"Dirichlet eigenvalue; perturb k by ~0.5% and rerun")
        self.symbol = sym

    def solve_const(self, rhs: np.ndarray) -> np.ndarray:
        """(Laplace_h + k^2)^{-1} with zero Dirichlet data."""
        coeff = dstn(rhs, type=1)
        return idstn(coeff / self.symbol, type=1)


def _laplacian_interior(full: np.ndarray, h: float) -> np.ndarray:
    """7-point Laplacian evaluated on interior nodes of a full array."""
    c = full[1:-1, 1:-1, 1:-1]
    return (full[2:, 1:-1, 1:-1] + full[:-2, 1:-1, 1:-1]
            + full[1:-1, 2:, 1:-1] + full[1:-1, :-2, 1:-1]
            + full[1:-1, 1:-1, 2:] + full[1:-1, 1:-1, :-2]
            - 6.0 * c) / h**2


def _embed_boundary(grid: Grid, f: BoundaryField) -> np.ndarray:
    """Full (n+1)^3 array with boundary faces set from f, zero interior.

    Plus faces are written last; shared edges take the last writer, which
    is irrelevant for the interior equations (edge nodes have no interior
    neighbors across the edge)."""
    n = grid.points_per_axis
    full = np.zeros((n + 1,) * 3, dtype=np.complex128)
    for name, (axis, side) in FACE_AXES.items():
        sl = [slice(None)] * 3
        sl[axis] = n if side == 1 else 0
        full[tuple(sl)] = f.faces[name]
    return full


def boundary_l2_norm(f: BoundaryField) -> float:
    h = f.grid.spacing
    n = f.grid.points_per_axis
    total = sum(np.sum(np.abs(f.faces[name][:n, :n])**2)
                for name in FACE_NAMES)
    return float(np.sqrt(total * h**2))


def solve_dirichlet(q: Potential, k: float, f: BoundaryField,
                    tol: float = 1e-9, maxiter: int = 200) -> ScalarField:
    """Solve (Laplace + k^2 + q) u = 0 in the cube with u = f on the faces.

    Discrete residual is driven below tol * ||f||_{L^2(boundary)}.  Raises
    ResonantFrequency if k^2 sits on a discrete eigenvalue or GMRES
    stagnates.
    """
    grid = q.grid
    if f.grid != grid:
        raise ConfigError("boundary data grid does not match potential grid")
    if k < 1.0:
        raise ConfigError(f"wave number must be >= 1, got {k}")
    n = grid.points_per_axis
    h = grid.spacing
    ws = _get_dirichlet_workspace(grid, k)

    bdry = _embed_boundary(grid, f)
    qc = q.field.values.real[1:-1, 1:-1, 1:-1]
    # A u_int = b with A = Laplace_h^Dir + k^2 + q and
    # b = -(boundary neighbor terms) - (k^2 + q) * 0
    b = -_laplacian_interior(bdry, h)

    fnorm = boundary_l2_norm(f)
    if fnorm == 0.0:
        return ScalarField(grid, np.zeros((n + 1,) * 3, dtype=np.complex128))

    qmax = float(np.max(np.abs(qc)))
    if qmax == 0.0:
        v = ws.solve_const(b)
    else:
        shape = ((n - 1)**3,)

        def apply_a(x):
            xv = x.reshape((n - 1,) * 3)
            full = np.zeros((n + 1,) * 3, dtype=np.complex128)
            full[1:-1, 1:-1, 1:-1] = xv
            out = _laplacian_interior(full, h) + (k**2 + qc) * xv
            return out.ravel()

        def apply_m(x):
            return ws.solve_const(x.reshape((n - 1,) * 3)).ravel()

        op = LinearOperator((shape[0], shape[0]), matvec=apply_a,
                            dtype=np.complex128)
        pre = LinearOperator((shape[0], shape[0]), matvec=apply_m,
                             dtype=np.complex128)
        atol = 0.1 * tol * fnorm / h**1.5
        x0 = apply_m(b.ravel())
        sol, info = gmres(op, b.ravel(), x0=x0, M=pre, atol=atol, rtol=0.0,
                          maxiter=maxiter, restart=50)
        if info != 0:
            raise ResonantFrequency(
                f"GMRES stagnated (info={info}) at k = {k}; k^2 likely near "
                f"an interior eigenvalue, perturb k by ~0.5% and rerun")
        v = sol.reshape((n - 1,) * 3)

    u = bdry
    u[1:-1, 1:-1, 1:-1] = v
    field = ScalarField(grid, u, kind="interior")
    res = np.sqrt(np.sum(np.abs(
        _laplacian_interior(u, h) + (k**2 + qc) * v)**2) * h**3)
    if res > 10.0 * tol * fnorm:
        raise ResonantFrequency(
            f"discrete residual {res:.3g} exceeds tolerance "
            f"{tol * fnorm:.3g}; system near-singular at k = {k}")
    return field


_WORKSPACES: dict = {}


def _get_dirichlet_workspace(grid: Grid, k: float) -> _DirichletWorkspace:
    key = (grid.extent, grid.points_per_axis, k)
    if key not in _WORKSPACES:
        _WORKSPACES[key] = _DirichletWorkspace(grid, k)
    return _WORKSPACES[key]


# ---------------------------------------------------------------------------
# Cauchy data
# ---------------------------------------------------------------------------

@dataclass
class CauchyPair:
    """Boundary trace and outward normal derivative with cached graph norm."""

    f: BoundaryField
    g: BoundaryField
    k: float
    norm_cache: float


def cauchy_data(u: ScalarField, k: float) -> CauchyPair:
    f = boundary_trace(u)
    g = normal_derivative(u)
    norm = float(np.sqrt(boundary_sobolev_norm(f, 0.5)**2
                         + boundary_sobolev_norm(g, -0.5)**2))
    return CauchyPair(f, g, k, norm)


# ---------------------------------------------------------------------------
# boundary basis and DtN matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisElement:
    face: str
    m1: int
    m2: int


def boundary_basis(degree_cap: int):
    """Per-face 2D Fourier modes, faces in FACE_NAMES order, modes in
    lexicographic (m1, m2) order over [-cap, cap]^2."""
    if degree_cap < 1:
        raise ConfigError(f"degree_cap must be >= 1, got {degree_cap}")
    elems = []
    rng = range(-degree_cap, degree_cap + 1)
    for face in FACE_NAMES:
        for m1 in rng:
            for m2 in rng:
                elems.append(BasisElement(face, m1, m2))
    return elems


def basis_boundary_field(grid: Grid, elem: BasisElement) -> BoundaryField:
    bf = zero_boundary_field(grid)
    x = grid.nodes()
    t1, t2 = np.meshgrid(x, x, indexing="ij")
    mu = np.pi / grid.extent
    bf.faces[elem.face] = np.exp(1j * mu * (elem.m1 * t1 + elem.m2 * t2))
    return bf


def face_mode_transform(face_vals: np.ndarray, grid: Grid) -> np.ndarray:
    """2D transform g_hat(m) = h^2 sum g exp(-i mu_m . t) over one face, in
    FFT mode ordering (origin phase at t = (-L, -L) included)."""
    n = grid.points_per_axis
    h = grid.spacing
    coeff = np.fft.fft2(face_vals[:n, :n]) * h**2
    m = np.fft.fftfreq(n, d=1.0 / n)
    sign = (-1.0) ** np.abs(m)
    return coeff * sign[:, None] * sign[None, :]


def project_boundary(bf: BoundaryField, basis) -> tuple[np.ndarray, float]:
    """Coefficients of bf in the capped basis plus the retained fraction of
    (H^{1/2}-weighted) boundary energy."""
    grid = bf.grid
    n = grid.points_per_axis
    L = grid.extent
    mu1 = grid.torus_frequencies()
    w_full = np.sqrt(1.0 + mu1[:, None]**2 + mu1[None, :]**2)
    coeffs = np.zeros(len(basis), dtype=np.complex128)
    total = 0.0
    kept = 0.0
    per_face = {face: face_mode_transform(bf.faces[face], grid)
                for face in FACE_NAMES}
    for face in FACE_NAMES:
        total += float(np.sum(w_full * np.abs(per_face[face])**2))
    for i, e in enumerate(basis):
        c = per_face[e.face][e.m1 % n, e.m2 % n] / (2.0 * L)**2
        coeffs[i] = c
        mu2 = (np.pi / L)**2 * (e.m1**2 + e.m2**2)
        kept += np.sqrt(1.0 + mu2) * abs(c * (2.0 * L)**2)**2
    retained = 1.0 if total == 0.0 else kept / total
    return coeffs, float(retained)


@dataclass
class DtNMatrix:
    """Finite section of the DtN map over the capped boundary basis.

    entries[i][j] = <dnu u_j, b_i> with the bilinear (unconjugated) surface
    pairing, where u_j solves the Dirichlet problem with data b_j.
    """

    basis: list
    entries: np.ndarray
    k: float
    q_id: str
    grid: Grid
    degree_cap: int

    def mode_weights(self, order: float) -> np.ndarray:
        """Per-element weight (1 + |mu_m|^2)^(order/2), |mu_m| the tangential
        frequency of the basis mode."""
        L = self.grid.extent
        out = np.empty(len(self.basis))
        for i, e in enumerate(self.basis):
            mu2 = (np.pi / L)**2 * (e.m1**2 + e.m2**2)
            out[i] = (1.0 + mu2) ** (order / 2.0)
        return out


def variational_flux(u: ScalarField) -> BoundaryField:
    """Discrete outward flux (u_face - u_first_interior) / h per face, with
    edge lines zeroed.

    This is the flux under which the 7-point scheme satisfies the discrete
    Green identity exactly, so DtN matrices built from it are symmetric
    under the bilinear pairing up to solver residual, and the discrete
    Alessandrini identity holds exactly.  It is first-order as a pointwise
    normal derivative; smooth-trace consumers use normal_derivative instead.
    """
    grid = u.grid
    n = grid.points_per_axis
    h = grid.spacing
    faces = {}
    for name, (axis, side) in FACE_AXES.items():
        b = _face_slice(u.values, axis, n if side == 1 else 0)
        inner = _face_slice(u.values, axis, n - 1 if side == 1 else 1)
        g = (b - inner) / h
        g[0, :] = 0.0
        g[-1, :] = 0.0
        g[:, 0] = 0.0
        g[:, -1] = 0.0
        faces[name] = g
    return BoundaryField(grid, faces)


def _face_slice(values: np.ndarray, axis: int, index: int) -> np.ndarray:
    sl = [slice(None)] * 3
    sl[axis] = index
    return values[tuple(sl)].copy()


def dtn_matrix(q: Potential, k: float, degree_cap: int,
               tol: float = 1e-9) -> DtNMatrix:
    """One Dirichlet solve per basis element; entries are pairings of the
    variational flux with the basis modes, evaluated via per-face FFT."""
    grid = q.grid
    basis = boundary_basis(degree_cap)
    dim = len(basis)
    n = grid.points_per_axis
    entries = np.zeros((dim, dim), dtype=np.complex128)
    for j, elem in enumerate(basis):
        f = basis_boundary_field(grid, elem)
        u = solve_dirichlet(q, k, f, tol=tol)
        g = variational_flux(u)
        per_face = {face: face_mode_transform(g.faces[face], grid)
                    for face in FACE_NAMES}
        # <g, b_i> = g_hat evaluated at -m_i on the face of b_i
        for i, e in enumerate(basis):
            entries[i, j] = per_face[e.face][(-e.m1) % n, (-e.m2) % n]
    return DtNMatrix(basis, entries, k, potential_id(q), grid, degree_cap)


def weighted_operator_norm(m: DtNMatrix, entries: np.ndarray | None = None
                           ) -> float:
    """Largest singular value of the DtN entries as a map from
    H^{1/2}-weighted to H^{-1/2}-weighted basis coordinates."""
    a = m.entries if entries is None else entries
    L = m.grid.extent
    w_minus = m.mode_weights(-0.5) / (2.0 * L)      # output: pairing values
    w_plus = m.mode_weights(0.5) * (2.0 * L)        # input: coefficients
    weighted = (w_minus[:, None] * a) / w_plus[None, :]
    return float(np.linalg.norm(weighted, ord=2))


def bilinear_eval(m: DtNMatrix, c1: np.ndarray, c2: np.ndarray) -> complex:
    """<Lambda f1, f2> for coefficient vectors of f1, f2 (bilinear pairing)."""
    return complex(c2 @ (m.entries @ c1))


def add_noise(m: DtNMatrix, epsilon: float, seed: int) -> DtNMatrix:
    """Dense random perturbation with weighted operator norm equal to
    epsilon times the weighted norm of m; deterministic in the seed."""
    if epsilon < 0:
        raise ConfigError(f"noise level must be >= 0, got {epsilon}")
    if epsilon == 0.0:
        return m
    rng = np.random.default_rng(seed)
    dim = len(m.basis)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    scale = epsilon * weighted_operator_norm(m) / weighted_operator_norm(m, g)
    return DtNMatrix(m.basis, m.entries + scale * g, m.k, m.q_id + "+noise",
                     m.grid, m.degree_cap)


_REFERENCE_NORMS: dict = {}


def reference_dtn_norm(grid: Grid, k: float, degree_cap: int) -> float:
    """Weighted norm of the zero-potential DtN matrix; the fixed
    normalization making the distance proxy a dimensionless metric."""
    key = (grid.extent, grid.points_per_axis, k, degree_cap)
    if key not in _REFERENCE_NORMS:
        q0 = sample_potential(ZeroPotential(), grid)
        _REFERENCE_NORMS[key] = weighted_operator_norm(
            dtn_matrix(q0, k, degree_cap))
    return _REFERENCE_NORMS[key]


@dataclass(frozen=True)
class NoiseSpec:
    epsilon: float
    seed: int = 0


def cauchy_dist(q1: Potential, q2: Potential, k: float, degree_cap: int,
                noise: NoiseSpec | None = None, tol: float = 1e-9) -> float:
    """Distance proxy ||Lambda_1 - Lambda_2||_w / ||Lambda_0||_w.

    Lambda_0 is the zero-potential DtN at the same (grid, k, cap); noise,
    if given, perturbs Lambda_2 before the difference is taken.
    """
    if q1.grid != q2.grid:
        raise ConfigError("potentials live on different grids")
    m1 = dtn_matrix(q1, k, degree_cap, tol=tol)
    m2 = dtn_matrix(q2, k, degree_cap, tol=tol)
    return cauchy_dist_from_matrices(m1, m2, noise)


def cauchy_dist_from_matrices(m1: DtNMatrix, m2: DtNMatrix,
                              noise: NoiseSpec | None = None) -> float:
    if m1.degree_cap != m2.degree_cap or m1.k != m2.k:
        raise ConfigError("DtN matrices are not comparable")
    if noise is not None:
        m2 = add_noise(m2, noise.epsilon, noise.seed)
    diff = weighted_operator_norm(m1, m1.entries - m2.entries)
    ref = reference_dtn_norm(m1.grid, m1.k, m1.degree_cap)
    return diff / ref


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_dtn(f: BinaryIO, m: DtNMatrix) -> None:
    """Self-describing block: magic, dimension (i32), k (f64), degree cap
    (i32), grid extent (f64), grid n (i32), then row-major little-endian
    complex entries."""
    f.write(DTN_MAGIC)
    f.write(struct.pack("<idid", len(m.basis), m.k, m.degree_cap,
                        m.grid.extent))
    f.write(struct.pack("<i", m.grid.points_per_axis))
    flat = np.ascontiguousarray(m.entries).ravel()
    out = np.empty(2 * flat.size, dtype="<f8")
    out[0::2] = flat.real
    out[1::2] = flat.imag
    f.write(out.tobytes())


def read_dtn(f: BinaryIO) -> DtNMatrix:
    magic = f.read(8)
    if magic != DTN_MAGIC:
        raise ConfigError(f"bad DtN magic {magic!r}")
    dim, k, cap, extent = struct.unpack("<idid", f.read(24))
    (n,) = struct.unpack("<i", f.read(4))
    from .grid import build_grid
    grid = build_grid(extent, n)
    basis = boundary_basis(cap)
    if len(basis) != dim:
        raise ConfigError("stored dimension inconsistent with degree cap")
    raw = np.frombuffer(f.read(16 * dim * dim), dtype="<f8")
    entries = (raw[0::2] + 1j * raw[1::2]).reshape(dim, dim)
    return DtNMatrix(basis, entries.copy(), k, "loaded", grid, cap)
