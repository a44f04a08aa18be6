import json
import math

import numpy as np
import pytest

from cgolab.errors import ConfigError
from cgolab.grid import (GaussianBump, ScalarField, ZeroPotential,
                         build_grid, sample_potential, sobolev_norm)
from cgolab.probe import FourierSample, FourierSampleSet, acquire_samples
from cgolab.reconstruct import (FourierInterpolator, choose_a, choose_cutoff,
                                error_h_minus_s, lowpass_invert,
                                polar_quadrature, reconstruct, save_result)


@pytest.fixture(scope="module")
def grid():
    return build_grid(1.0, 16)


@pytest.fixture(scope="module")
def q_pair(grid):
    q1 = sample_potential(GaussianBump(center=(0.1, -0.05, 0.0), width=0.3,
                                       amplitude=1.0), grid)
    q2 = sample_potential(ZeroPotential(), grid)
    return q1, q2


def test_choose_a_branches():
    assert choose_a(0.0, 1.0, 5.0) == 5.0
    assert choose_a(10.0, 1.0, 5.0) == 10.0
    assert choose_a(6.0, 1.0, 5.0) == 5.0  # tie goes to the small-r branch
    # feasibility in both branches
    for r, k, R in ((0.0, 1.0, 5.0), (6.0, 1.0, 5.0), (30.0, 2.0, 3.0)):
        a = choose_a(r, k, R)
        assert k**2 + a**2 > r**2 / 4.0


def test_choose_cutoff_cases():
    pol = choose_cutoff(1.0, 1e-6, 5.0, 1.0)
    assert pol.regime == "case_i"
    assert pol.T == pytest.approx(math.log(1e12), rel=1e-12)

    pol = choose_cutoff(20.0, 1e-2, 5.0, 1.0)
    assert pol.regime == "case_ii"
    assert pol.T == 25.0

    with pytest.raises(ConfigError):
        choose_cutoff(1.0, 0.5, 5.0, 1.0)  # above 1/e
    with pytest.raises(ConfigError):
        choose_cutoff(1.0, 0.0, 5.0, 1.0)  # exact data path elsewhere


def test_choose_cutoff_monotone_continuous():
    k, R, p = 2.0, 3.0, 1.0
    dists = np.logspace(-8, -1, 20)
    Ts = [choose_cutoff(k, d, R, p).T for d in dists]
    assert all(a >= b - 1e-12 for a, b in zip(Ts, Ts[1:]))
    # continuity across the case boundary: dist where p log(1/A) = k + R
    d_star = math.exp(-(k + R) / (2.0 * p))
    lo = choose_cutoff(k, d_star * (1 - 1e-9), R, p).T
    hi = choose_cutoff(k, d_star * (1 + 1e-9), R, p).T
    assert abs(lo - hi) <= 1e-6


def test_noise_scale_flag():
    pol2 = choose_cutoff(1.0, 1e-3, 1.0, 0.25, noise_scale="dist_squared")
    pol1 = choose_cutoff(1.0, 1e-3, 1.0, 0.25, noise_scale="dist")
    assert pol2.T >= pol1.T  # A = dist^2 is smaller, log larger


def test_fourier_interpolator_matches_direct(grid, q_pair):
    q1, q2 = q_pair
    diff = ScalarField(grid, q1.field.values - q2.field.values,
                       kind="interior")
    interp = FourierInterpolator(diff)
    rng = np.random.default_rng(2)
    kappas = rng.uniform(-5.0, 5.0, size=(6, 3))
    vals = interp(kappas)
    h = grid.spacing
    x = grid.nodes()[:grid.n]
    core = diff.core
    for kv, v in zip(kappas, vals):
        p = [np.exp(-1j * kv[d] * x) for d in range(3)]
        direct = np.sum(core * p[0][:, None, None] * p[1][None, :, None]
                        * p[2][None, None, :]) * h**3
        assert abs(v - direct) <= 1e-4 * max(1.0, abs(direct))


def test_lowpass_zero_samples(grid):
    radii, rw = np.array([0.5, 1.0, 1.5, 2.0]), np.full(4, 0.5)
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    dw = np.full(6, 4.0 * np.pi / 6.0)
    samples = [FourierSample(r, om, 1.0, 0.0j, "oracle")
               for r in radii for om in dirs]
    sset = FourierSampleSet(samples, 2.0, 1.0, 1.0, "oracle", 0.0,
                            radii, rw, dirs, dw)
    q_hat = lowpass_invert(sset, grid)
    assert np.abs(q_hat.values).max() == 0.0


def test_lowpass_single_mode(grid):
    # one nonzero sample -> the corresponding weighted plane wave exactly
    radii, rw = np.array([0.5, 1.0, 1.5, 2.0]), np.full(4, 0.5)
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    dw = np.full(6, 4.0 * np.pi / 6.0)
    samples = [FourierSample(r, om, 1.0, 0.0j, "oracle")
               for r in radii for om in dirs]
    samples[7] = FourierSample(radii[1], dirs[1], 1.0, 2.0 + 0.0j, "oracle")
    sset = FourierSampleSet(samples, 2.0, 1.0, 1.0, "oracle", 0.0,
                            radii, rw, dirs, dw)
    q_hat = lowpass_invert(sset, grid)
    coef = (rw[1] * radii[1]**2 * dw[1] * 2.0) / (2.0 * np.pi)**3
    x = grid.nodes()
    expected = coef * np.real(np.exp(
        1j * radii[1] * dirs[1][1] * x))[None, :, None]
    expected = np.broadcast_to(expected, q_hat.values.shape)
    assert np.allclose(q_hat.values.real, expected, atol=1e-12)


def test_lowpass_design_validation(grid):
    radii, rw = np.array([1.0, 2.0]), np.full(2, 1.0)
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    dw = np.full(6, 4.0 * np.pi / 6.0)
    samples = [FourierSample(r, om, 1.0, 0.0j, "oracle")
               for r in radii for om in dirs]
    sset = FourierSampleSet(samples, 2.0, 1.0, 1.0, "oracle", 0.0,
                            radii, rw, dirs, dw)
    with pytest.raises(ConfigError):
        lowpass_invert(sset, grid)  # only 2 radii


def test_error_h_minus_s_properties(grid, q_pair):
    q1, q2 = q_pair
    diff = ScalarField(grid, q1.field.values - q2.field.values,
                       kind="interior")
    zero = ScalarField(grid, np.zeros_like(diff.values), kind="interior")
    # exact reconstruction -> zero error
    e_exact, _ = error_h_minus_s(diff, diff, 2.0)
    assert e_exact <= 1e-12
    # zero reconstruction -> the norm itself, near the torus surrogate
    e_zero, e_torus = error_h_minus_s(diff, zero, 2.0)
    assert abs(e_zero - e_torus) <= 0.1 * e_torus
    # homogeneity
    half = ScalarField(grid, 0.5 * diff.values, kind="interior")
    e_half, _ = error_h_minus_s(diff, half, 2.0)
    assert e_half == pytest.approx(0.5 * e_zero, rel=1e-6)


def test_reconstruct_oracle_exact_path(grid, q_pair):
    q1, q2 = q_pair
    res = reconstruct(q1, q2, 2.0, R=4.0, mode="oracle", radial_count=10,
                      T_max=8.0)
    assert res.regime == "exact"
    assert res.T == 8.0
    assert res.m == 1.0
    diff = ScalarField(grid, q1.field.values - q2.field.values,
                       kind="interior")
    rel = res.error_h_minus_s / sobolev_norm(diff, -2.0)
    assert rel < 0.35
    assert res.imag_remainder < 1e-10
    # synthesis frequencies all within the cutoff ball
    assert max(s.r for s in res.samples.samples) <= res.T


def test_reconstruct_identical_potentials(grid, q_pair):
    q1, _ = q_pair
    res = reconstruct(q1, q1, 2.0, R=4.0, mode="oracle", radial_count=6,
                      T_max=4.0)
    assert res.error_h_minus_s <= 1e-8


def test_reconstruct_case_ii_no_i2(grid, q_pair):
    # case_ii: T = k + R, so no samples beyond k + R and I2 = 0
    q1, q2 = q_pair
    from cgolab.forward import NoiseSpec
    res = reconstruct(q1, q2, 2.0, R=1.0, p=0.25, mode="boundary",
                      noise=NoiseSpec(1e-2, 3), degree_cap=3,
                      radial_count=6)
    if res.regime == "case_ii":
        assert res.diagnostics["I2"] == 0.0


def test_save_result(grid, q_pair, tmp_path):
    q1, q2 = q_pair
    res = reconstruct(q1, q2, 2.0, R=4.0, mode="oracle", radial_count=6,
                      T_max=4.0)
    paths = save_result(res, tmp_path)
    with open(paths["meta"]) as fh:
        meta = json.load(fh)
    assert meta["T"] == 4.0
    assert meta["regime"] == "exact"
    from cgolab.grid import read_field
    with open(paths["field"], "rb") as fh:
        f = read_field(fh)
    assert np.array_equal(f.values, res.q_hat.values)
