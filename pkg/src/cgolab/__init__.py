"""Numerical lab for CGO-based inverse boundary value experiments.

Pipeline: complex geometrical optics solutions on a periodic cube,
Dirichlet-to-Neumann matrices for the Schrodinger operator, Fourier
probing of potential differences through the Alessandrini pairing, and
frequency-split low-pass reconstruction with k/noise sweep harnesses.
"""

from .errors import (CgoLabError, ConfigError, DegenerateSymbol,
                     InsufficientData, InvalidFrequencyRange, NoContraction,
                     ResonantFrequency)
from .grid import (BoundaryField, BumpSum, GaussianBump, Grid, Potential,
                   ScalarField, ZeroPotential, boundary_trace, build_grid,
                   field_from_function, l2_norm, normal_derivative,
                   read_field, sample_potential, sobolev_norm, write_field)
from .cgo import (CGOSolution, ZetaPair, ZetaVector, build_cgo, cgo_field,
                  estimate_cstar, faddeev_apply, faddeev_invert,
                  make_zeta_pair)
from .forward import (CauchyPair, DtNMatrix, NoiseSpec, add_noise,
                      cauchy_data, cauchy_dist, dtn_matrix, solve_dirichlet)
from .probe import (FourierSample, FourierSampleSet, acquire_samples,
                    alessandrini_bound, alessandrini_lhs, fourier_probe,
                    sphere_design)
from .reconstruct import (CutoffPolicy, ReconstructionResult, choose_a,
                          choose_cutoff, error_h_minus_s, lowpass_invert,
                          reconstruct)
from .sweep import (FitReport, StabilityRecord, SweepConfig, fit_stability,
                    render_report, run_sweep)

__version__ = "0.1.0"
