"""Exception hierarchy shared across the lab."""


class CgoLabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CgoLabError):
    """Invalid grid, potential, or experiment configuration."""


class InvalidFrequencyRange(CgoLabError):
    """Probing-vector parameters violate k^2 + a^2 > r^2 / 4."""


class DegenerateSymbol(CgoLabError):
    """The shifted Fourier symbol of the conjugated Laplacian (nearly)
    vanishes; indicates a frame or lattice-shift bug."""


class NoContraction(CgoLabError):
    """The fixed-point iteration for the CGO correction failed to contract;
    |xi| is too small relative to the potential norm."""


class ResonantFrequency(CgoLabError):
    """k^2 sits at or near a discrete Dirichlet eigenvalue; the forward
    problem is not (stably) solvable.  Perturb k by ~0.5% and rerun."""


class InsufficientData(CgoLabError):
    """Not enough sweep records to fit the stability curve."""
