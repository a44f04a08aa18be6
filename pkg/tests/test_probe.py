import io

import numpy as np
import pytest

from cgolab.cgo import build_cgo, cgo_field, make_zeta_pair
from cgolab.errors import ConfigError
from cgolab.forward import cauchy_data, cauchy_dist, dtn_matrix, solve_dirichlet
from cgolab.grid import (GaussianBump, ScalarField, ZeroPotential,
                         boundary_trace, build_grid, sample_potential)
from cgolab.probe import (acquire_samples, alessandrini_bound,
                          alessandrini_lhs, fourier_probe, radial_rule,
                          read_samples_bin, sphere_design,
                          write_samples_bin, write_samples_csv)


@pytest.fixture(scope="module")
def grid():
    return build_grid(1.0, 16)


@pytest.fixture(scope="module")
def q_pair(grid):
    q1 = sample_potential(GaussianBump(center=(0.1, -0.05, 0.0), width=0.3,
                                       amplitude=1.0), grid)
    q2 = sample_potential(ZeroPotential(), grid)
    return q1, q2


def _fft_truth(q1, q2, r, omega):
    grid = q1.grid
    h = grid.spacing
    x = grid.nodes()[:grid.n]
    core = q1.field.core - q2.field.core
    kv = r * np.asarray(omega)
    p = [np.exp(-1j * kv[d] * x) for d in range(3)]
    return complex(np.sum(core * p[0][:, None, None] * p[1][None, :, None]
                          * p[2][None, None, :]) * h**3)


def test_sphere_designs_weights():
    for name, npts in (("octahedral", 6), ("d26", 26)):
        dirs, w = sphere_design(name)
        assert dirs.shape == (npts, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
        assert np.sum(w) == pytest.approx(4.0 * np.pi, rel=1e-12)


def test_d26_integrates_low_degree():
    # degree-7 design: exact for x^2 and x^4 y^2 monomials
    dirs, w = sphere_design("d26")
    val = np.sum(w * dirs[:, 0]**2)
    assert val == pytest.approx(4.0 * np.pi / 3.0, rel=1e-12)
    val = np.sum(w * dirs[:, 0]**4 * dirs[:, 1]**2)
    assert val == pytest.approx(4.0 * np.pi / 35.0, rel=1e-10)


def test_unknown_design():
    with pytest.raises(ConfigError):
        sphere_design("icosahedral")


def test_radial_rule():
    r, w = radial_rule(3.0, 8)
    assert np.all((r > 0) & (r < 3.0))
    assert np.sum(w) == pytest.approx(3.0, rel=1e-12)
    # integrates r^2 exactly
    assert np.sum(w * r**2) == pytest.approx(9.0, rel=1e-12)


def test_oracle_probe_accuracy(q_pair):
    q1, q2 = q_pair
    s = fourier_probe(q1, q2, 2.0, 1.5, np.array([0.0, 1.0, 0.0]), 16.0,
                      mode="oracle")
    truth = _fft_truth(q1, q2, 1.5, np.array([0.0, 1.0, 0.0]))
    assert abs(s.value - truth) <= 5e-3 * abs(truth) + 1e-6
    assert s.error_estimate is not None


def test_probe_conjugate_symmetry(q_pair):
    q1, q2 = q_pair
    om = np.array([0.0, 0.0, 1.0])
    sp = fourier_probe(q1, q2, 1.0, 1.0, om, 16.0, mode="oracle")
    sm = fourier_probe(q1, q2, 1.0, 1.0, -om, 16.0, mode="oracle")
    assert abs(sp.value - np.conj(sm.value)) <= 2.0 * sp.error_estimate + 1e-8


def test_probe_error_decay(q_pair):
    q1, q2 = q_pair
    om = np.array([0.0, 1.0, 0.0])
    truth = _fft_truth(q1, q2, 1.0, om)
    e_small = abs(fourier_probe(q1, q2, 2.0, 1.0, om, 8.0,
                                mode="oracle").value - truth)
    e_big = abs(fourier_probe(q1, q2, 2.0, 1.0, om, 32.0,
                              mode="oracle").value - truth)
    assert e_big < e_small


def test_boundary_probe_matches_oracle(q_pair):
    q1, q2 = q_pair
    k = 2.0
    m1 = dtn_matrix(q1, k, 4)
    m2 = dtn_matrix(q2, k, 4)
    om = np.array([0.0, 1.0, 0.0])
    so = fourier_probe(q1, q2, k, 1.0, om, 2.0, mode="oracle")
    sb = fourier_probe(q1, q2, k, 1.0, om, 2.0, mode="boundary",
                       dtn1=m1, dtn2=m2)
    assert abs(so.value - sb.value) <= 0.15 * abs(so.value)


def test_boundary_probe_needs_matrices(q_pair):
    q1, q2 = q_pair
    with pytest.raises(ConfigError):
        fourier_probe(q1, q2, 2.0, 1.0, np.array([0.0, 1.0, 0.0]), 2.0,
                      mode="boundary")


def test_alessandrini_estimate(q_pair, grid):
    # |pairing| <= graph norms x distance, with a documented safety factor
    q1, q2 = q_pair
    k = 2.0
    dist = cauchy_dist(q1, q2, k, 3)
    rng = np.random.default_rng(21)
    for _ in range(10):
        a = float(rng.uniform(2.0, 8.0))
        r = float(rng.uniform(0.0, 2.0))
        w = rng.normal(size=3)
        w /= np.linalg.norm(w)
        pair = make_zeta_pair(k, r, w, a)
        u1 = cgo_field(build_cgo(q1, pair.zeta1), grid)
        u2 = cgo_field(build_cgo(q2, pair.zeta2), grid)
        # discrete solutions with the CGO traces
        U1 = solve_dirichlet(q1, k, boundary_trace(u1))
        U2 = solve_dirichlet(q2, k, boundary_trace(u2))
        lhs = alessandrini_lhs(q1, q2, U1, U2)
        bound = alessandrini_bound(cauchy_data(U1, k), cauchy_data(U2, k),
                                   dist)
        assert abs(lhs) <= 10.0 * bound


def test_acquire_samples_r0_direction_independent(q_pair):
    q1, q2 = q_pair
    sset = acquire_samples(q1, q2, 2.0, 8.0, 1e-6, radial_count=1,
                           sphere_design_name="octahedral", mode="oracle")
    vals = [s.value for s in sset.samples]
    assert len(vals) == 6
    spread = max(abs(v - vals[0]) for v in vals)
    assert spread <= 1e-4 * abs(vals[0])


def test_acquire_samples_monotone_decay(q_pair):
    q1, q2 = q_pair
    sset = acquire_samples(q1, q2, 2.0, 8.0, 12.0, radial_count=8,
                           sphere_design_name="octahedral", mode="oracle")
    # direction (0,1,0): |F qd| decays beyond the bump inverse width
    n_d = 6
    by_r = [abs(sset.samples[i * n_d + 2].value)
            for i in range(len(sset.radii)) if sset.radii[i] > 4.0]
    assert all(x > y for x, y in zip(by_r, by_r[1:]))


def test_sample_serialization(q_pair, tmp_path):
    q1, q2 = q_pair
    sset = acquire_samples(q1, q2, 2.0, 8.0, 3.0, radial_count=4,
                           sphere_design_name="octahedral", mode="oracle")
    buf = io.BytesIO()
    write_samples_bin(buf, sset)
    buf.seek(0)
    back = read_samples_bin(buf)
    assert len(back.samples) == len(sset.samples)
    assert back.samples[3].value == sset.samples[3].value
    assert back.samples[3].r == sset.samples[3].r

    csv_path = tmp_path / "samples.csv"
    write_samples_csv(csv_path, sset)
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 1 + len(sset.samples)
    assert lines[0].startswith("r,omega1")
