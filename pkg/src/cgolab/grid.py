"""Cube domain, gridded fields, spectral Sobolev norms and boundary traces.

The computational domain is the cube [-L, L]^3 discretized by n cells per
axis (n even), i.e. n+1 nodes per axis at x_i = -L + i*h with h = 2L/n.
Spectral operations identify the cube with the torus of period 2L per axis
and act on the n^3 sub-grid that drops the duplicated right faces.

Fourier convention: no 2*pi prefactor,

    F q (mu) = integral q(x) exp(-i mu . x) dx,

realized on the frequency lattice mu in (pi/L) Z^3 by the trapezoidal sum
h^3 * sum_j q(x_j) exp(-i mu . x_j).  A single torus mode exp(i mu0 . x)
then has coefficient (2L)^3 at mu = mu0 and the H^s norm

    ||q||_{H^s}^2 = (2L)^{-3} * sum_mu (1 + |mu|^2)^s |F q(mu)|^2

evaluates to (1 + |mu0|^2)^{s/2} (2L)^{3/2}, while s = 0 reproduces the
grid L^2 norm (sum |q|^2 h^3)^{1/2}.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from typing import BinaryIO, Sequence

import numpy as np

from .errors import ConfigError

FIELD_MAGIC = b"CGOLAB01"

FACE_NAMES = ("x-", "x+", "y-", "y+", "z-", "z+")
# (axis, side) per face; side 0 is the -L face, side 1 the +L face.
FACE_AXES = {"x-": (0, 0), "x+": (0, 1), "y-": (1, 0), "y+": (1, 1),
             "z-": (2, 0), "z+": (2, 1)}


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on the cube [-extent, extent]^3."""

    extent: float
    points_per_axis: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.points_per_axis

    @property
    def n(self) -> int:
        return self.points_per_axis

    def nodes(self) -> np.ndarray:
        """Node coordinates along one axis, length n+1, from -L to L."""
        n = self.points_per_axis
        return -self.extent + self.spacing * np.arange(n + 1)

    def meshgrid(self):
        x = self.nodes()
        return np.meshgrid(x, x, x, indexing="ij", sparse=True)

    def torus_frequencies(self) -> np.ndarray:
        """1D frequency lattice mu = (pi/L) * m for the n-point torus grid,
        in numpy FFT ordering."""
        n = self.points_per_axis
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing)

    def frequency_radius(self) -> np.ndarray:
        """|mu| on the 3D torus frequency lattice (shape (n, n, n))."""
        mu = self.torus_frequencies()
        mx, my, mz = np.meshgrid(mu, mu, mu, indexing="ij", sparse=True)
        return np.sqrt(mx**2 + my**2 + mz**2)

    def __eq__(self, other):
        return (isinstance(other, Grid)
                and self.extent == other.extent
                and self.points_per_axis == other.points_per_axis)

    def __hash__(self):
        return hash((self.extent, self.points_per_axis))


def build_grid(extent: float, n: int) -> Grid:
    """Validated Grid constructor: n even, n >= 8, extent > 0."""
    if extent <= 0:
        raise ConfigError(f"grid extent must be positive, got {extent}")
    if n < 8 or n % 2 != 0:
        raise ConfigError(f"points_per_axis must be even and >= 8, got {n}")
    return Grid(float(extent), int(n))


@dataclass
class ScalarField:
    """Complex field on the node grid, shape (n+1, n+1, n+1).

    kind 'interior': a function on the cube, typically compactly supported
    or carrying Dirichlet boundary values.  kind 'periodic': a function on
    the enclosing torus; the i = n layers duplicate the i = 0 layers.
    """

    grid: Grid
    values: np.ndarray
    kind: str = "interior"

    def __post_init__(self):
        n = self.grid.points_per_axis
        expected = (n + 1, n + 1, n + 1)
        if self.values.shape != expected:
            raise ConfigError(
                f"field shape {self.values.shape} != {expected}")
        if self.kind not in ("interior", "periodic"):
            raise ConfigError(f"unknown field kind {self.kind!r}")
        if not np.iscomplexobj(self.values):
            self.values = self.values.astype(np.complex128)

    @property
    def core(self) -> np.ndarray:
        """The n^3 torus sub-array (right faces dropped)."""
        n = self.grid.points_per_axis
        return self.values[:n, :n, :n]

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), self.kind)


def field_from_core(grid: Grid, core: np.ndarray,
                    kind: str = "periodic") -> ScalarField:
    """Assemble a full (n+1)^3 field from n^3 torus values by periodic
    wrap-around of the right faces."""
    n = grid.points_per_axis
    vals = np.empty((n + 1, n + 1, n + 1), dtype=np.complex128)
    vals[:n, :n, :n] = core
    vals[n, :, :] = vals[0, :, :]
    vals[:, n, :] = vals[:, 0, :]
    vals[:, :, n] = vals[:, :, 0]
    return ScalarField(grid, vals, kind)


def field_from_function(grid: Grid, fn, kind: str = "interior") -> ScalarField:
    X, Y, Z = grid.meshgrid()
    vals = np.asarray(fn(X, Y, Z), dtype=np.complex128)
    vals = np.broadcast_to(vals, (grid.n + 1,) * 3).copy()
    return ScalarField(grid, vals, kind)


def zero_field(grid: Grid, kind: str = "interior") -> ScalarField:
    n = grid.points_per_axis
    return ScalarField(grid, np.zeros((n + 1,) * 3, dtype=np.complex128), kind)


def torus_coefficients(field: ScalarField) -> np.ndarray:
    """Fourier coefficients F q(mu) = h^3 sum q exp(-i mu . x) on the torus
    lattice, in FFT ordering (phase of the x = -L origin included)."""
    grid = field.grid
    n = grid.points_per_axis
    h = grid.spacing
    coeff = np.fft.fftn(field.core) * h**3
    # nodes start at -L: exp(-i mu (-L)) = (-1)^m per axis
    m = np.fft.fftfreq(n, d=1.0 / n)  # integer mode numbers
    sign = (-1.0) ** np.abs(m)
    coeff *= sign[:, None, None] * sign[None, :, None] * sign[None, None, :]
    return coeff


def field_from_coefficients(grid: Grid, coeff: np.ndarray,
                            kind: str = "periodic") -> ScalarField:
    """Inverse of :func:`torus_coefficients`."""
    n = grid.points_per_axis
    m = np.fft.fftfreq(n, d=1.0 / n)
    sign = (-1.0) ** np.abs(m)
    c = coeff * sign[:, None, None] * sign[None, :, None] * sign[None, None, :]
    core = np.fft.ifftn(c) / grid.spacing**3
    return field_from_core(grid, core, kind)


def sobolev_norm(field: ScalarField, s: float) -> float:
    """Torus H^s norm with weights (1 + |mu|^2)^s on |F q|^2 / (2L)^3.

    For s < 0 the field must be of kind 'interior' (zero extension of a
    compactly supported function is assumed).
    """
    if s < 0 and field.kind != "interior":
        raise ConfigError(
            "negative-order norms require an interior (compactly supported) "
            "field; got kind 'periodic'")
    grid = field.grid
    coeff = torus_coefficients(field)
    w = (1.0 + grid.frequency_radius()**2) ** s
    total = np.sum(w * np.abs(coeff)**2) / (2.0 * grid.extent)**3
    return float(np.sqrt(total))


def l2_inner(f: ScalarField, g: ScalarField) -> complex:
    """Grid L^2 inner product h^3 sum f conj(g) over the torus sub-grid."""
    if f.grid != g.grid:
        raise ConfigError("grid mismatch in inner product")
    h = f.grid.spacing
    return complex(np.sum(f.core * np.conj(g.core)) * h**3)


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(abs(l2_inner(f, f))))


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianBump:
    """Gaussian bump multiplied by a radial C-infinity cutoff so that the
    sampled potential is exactly compactly supported."""

    center: tuple = (0.0, 0.0, 0.0)
    width: float = 0.3
    amplitude: float = 1.0
    cutoff_radius: float | None = None  # default 3.0 * width

    @property
    def radius(self) -> float:
        return self.cutoff_radius if self.cutoff_radius is not None \
            else 3.0 * self.width


@dataclass(frozen=True)
class ZeroPotential:
    pass


@dataclass(frozen=True)
class BumpSum:
    bumps: tuple = ()


@dataclass
class Potential:
    """Real compactly supported potential with cached H^s metadata."""

    field: ScalarField
    s: float
    h_s_norm: float
    support_box: np.ndarray  # shape (3, 2): [lo, hi] per axis

    @property
    def grid(self) -> Grid:
        return self.field.grid


def _smooth_cutoff(t: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - t^2)) for |t| < 1, zero outside."""
    out = np.zeros_like(t, dtype=float)
    inside = np.abs(t) < 1.0
    ts = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ts**2))
    return out


def sample_potential(spec, grid: Grid, s: float = 2.0) -> Potential:
    """Sample an analytic potential descriptor onto the grid.

    Supported descriptors: ZeroPotential, GaussianBump, BumpSum.
    Raises ConfigError if a bump's cutoff ball leaves the cube interior.
    """
    if s <= 1.5:
        raise ConfigError(f"Sobolev exponent s must exceed n/2 = 1.5, got {s}")
    L = grid.extent
    if isinstance(spec, ZeroPotential):
        f = zero_field(grid, kind="interior")
        box = np.array([[0.0, 0.0]] * 3)
        return Potential(f, s, 0.0, box)
    if isinstance(spec, GaussianBump):
        spec = BumpSum((spec,))
    if not isinstance(spec, BumpSum):
        raise ConfigError(f"unknown potential descriptor {spec!r}")
    if len(spec.bumps) == 0:
        return sample_potential(ZeroPotential(), grid, s)

    X, Y, Z = grid.meshgrid()
    vals = np.zeros((grid.n + 1,) * 3)
    los = np.full(3, np.inf)
    his = np.full(3, -np.inf)
    for b in spec.bumps:
        c = np.asarray(b.center, dtype=float)
        rho = b.radius
        for i in range(3):
            if abs(c[i]) + rho >= L:
                raise ConfigError(
                    f"bump at {tuple(c)} with cutoff radius {rho} leaves the "
                    f"cube interior (extent {L})")
        dist = np.sqrt((X - c[0])**2 + (Y - c[1])**2 + (Z - c[2])**2)
        bump = b.amplitude * np.exp(-dist**2 / (2.0 * b.width**2))
        vals += bump * _smooth_cutoff(dist / rho)
        los = np.minimum(los, c - rho)
        his = np.maximum(his, c + rho)

    f = ScalarField(grid, vals.astype(np.complex128), kind="interior")
    box = np.stack([los, his], axis=1)
    return Potential(f, s, sobolev_norm(f, s), box)


# ---------------------------------------------------------------------------
# boundary fields
# ---------------------------------------------------------------------------

@dataclass
class BoundaryField:
    """Complex samples on the six cube faces, (n+1)^2 nodes per face.

    Face arrays are indexed by the two tangential axes in ascending axis
    order (e.g. the x- face by (iy, iz)).  Edge and corner nodes are shared
    between adjacent faces and agree for traces of continuous fields.
    """

    grid: Grid
    faces: dict

    def __post_init__(self):
        n = self.grid.points_per_axis
        for name in FACE_NAMES:
            if name not in self.faces:
                raise ConfigError(f"missing face {name!r}")
            if self.faces[name].shape != (n + 1, n + 1):
                raise ConfigError(f"face {name!r} has shape "
                                  f"{self.faces[name].shape}")
            if not np.iscomplexobj(self.faces[name]):
                self.faces[name] = self.faces[name].astype(np.complex128)

    def copy(self) -> "BoundaryField":
        return BoundaryField(self.grid,
                             {k: v.copy() for k, v in self.faces.items()})

    def __add__(self, other):
        return BoundaryField(self.grid, {k: self.faces[k] + other.faces[k]
                                         for k in FACE_NAMES})

    def __sub__(self, other):
        return BoundaryField(self.grid, {k: self.faces[k] - other.faces[k]
                                         for k in FACE_NAMES})

    def __mul__(self, c):
        return BoundaryField(self.grid, {k: self.faces[k] * c
                                         for k in FACE_NAMES})

    __rmul__ = __mul__


def zero_boundary_field(grid: Grid) -> BoundaryField:
    n = grid.points_per_axis
    return BoundaryField(grid, {name: np.zeros((n + 1, n + 1),
                                               dtype=np.complex128)
                                for name in FACE_NAMES})


def _face_slice(values: np.ndarray, axis: int, index: int) -> np.ndarray:
    sl = [slice(None)] * 3
    sl[axis] = index
    return values[tuple(sl)]


def boundary_trace(field: ScalarField) -> BoundaryField:
    """Restriction of a full-grid field to the six faces."""
    n = field.grid.points_per_axis
    faces = {}
    for name, (axis, side) in FACE_AXES.items():
        idx = n if side == 1 else 0
        faces[name] = _face_slice(field.values, axis, idx).copy()
    return BoundaryField(field.grid, faces)


# one-sided differentiation stencils at the first node (inward direction)
_STENCILS = {
    4: np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    2: np.array([-3.0, 4.0, -1.0]) / 2.0,
}


def normal_derivative(field: ScalarField, order: int = 4) -> BoundaryField:
    """Outward normal derivative on the six faces by one-sided finite
    differences into the interior (4th order default, 2nd order fallback)."""
    if order not in _STENCILS:
        raise ConfigError(f"unsupported stencil order {order}")
    coeffs = _STENCILS[order]
    n = field.grid.points_per_axis
    h = field.grid.spacing
    faces = {}
    for name, (axis, side) in FACE_AXES.items():
        acc = np.zeros((n + 1, n + 1), dtype=np.complex128)
        for j, c in enumerate(coeffs):
            idx = n - j if side == 1 else j
            acc += c * _face_slice(field.values, axis, idx)
        # the stencil differentiates along the inward direction on either
        # face; the outward normal derivative is its negative
        faces[name] = -acc / h
    return BoundaryField(field.grid, faces)


def boundary_sobolev_norm(bf: BoundaryField, order: float) -> float:
    """Per-face Fourier surrogate for the H^{+-1/2} trace norms.

    Each face is expanded in the 2D torus basis of period 2L; coefficients
    are weighted by (1 + |mu|^2)^order and summed over the six faces.
    """
    grid = bf.grid
    n = grid.points_per_axis
    h = grid.spacing
    L = grid.extent
    mu = grid.torus_frequencies()
    w = (1.0 + mu[:, None]**2 + mu[None, :]**2) ** order
    total = 0.0
    for name in FACE_NAMES:
        g = bf.faces[name][:n, :n]
        coeff = np.fft.fft2(g) * h**2
        total += np.sum(w * np.abs(coeff)**2) / (2.0 * L)**2
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_field(f: BinaryIO, field: ScalarField) -> None:
    """Flat binary field format: magic, extent (f64 LE), n (i32 LE), then
    the (n+1)^3 node values as little-endian float64 (re, im) pairs in
    x-fastest ordering."""
    f.write(FIELD_MAGIC)
    f.write(struct.pack("<d", field.grid.extent))
    f.write(struct.pack("<i", field.grid.points_per_axis))
    flat = np.asfortranarray(field.values).ravel(order="F")
    out = np.empty(2 * flat.size, dtype="<f8")
    out[0::2] = flat.real
    out[1::2] = flat.imag
    f.write(out.tobytes())


def read_field(f: BinaryIO, kind: str = "interior") -> ScalarField:
    magic = f.read(8)
    if magic != FIELD_MAGIC:
        raise ConfigError(f"bad field magic {magic!r}")
    (extent,) = struct.unpack("<d", f.read(8))
    (n,) = struct.unpack("<i", f.read(4))
    grid = build_grid(extent, n)
    count = 2 * (n + 1)**3
    raw = np.frombuffer(f.read(8 * count), dtype="<f8", count=count)
    vals = (raw[0::2] + 1j * raw[1::2]).reshape((n + 1,) * 3, order="F")
    return ScalarField(grid, vals.copy(), kind)
