import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quinticgp.fields import (
    DimensionError,
    GridField,
    GridMismatchError,
    MeanNonzeroError,
    Potential,
    conic_project,
    conic_symbols,
    convolve,
    coordinates,
    derivative,
    field_from_bytes,
    field_from_modes,
    field_to_bytes,
    free_propagate,
    gaussian,
    gaussian_potential,
    plane_wave,
    random_modes,
    read_field,
    sobolev_lp_norm,
    sobolev_norm,
    trilinear_A,
    write_field,
    zeros,
)

L1 = 2 * math.pi * 4


def rand_field(seed, dim=1, N=32, L=L1, K=None, mean_zero=True):
    rng = np.random.default_rng(seed)
    K = K if K is not None else N // 4
    return field_from_modes(random_modes(rng, dim, K, mean_zero=mean_zero), N, L)


@pytest.mark.parametrize("dim,N", [(1, 64), (3, 16)])
def test_parseval(dim, N):
    rng = np.random.default_rng(1)
    f = GridField(rng.standard_normal((N,) * dim) + 1j * rng.standard_normal((N,) * dim), 10.0)
    assert abs(f.l2_norm() - f.spectral_l2_norm()) <= 1e-12 * f.l2_norm()


def test_immutable_samples():
    f = gaussian(1, 16)
    with pytest.raises(ValueError):
        f.samples[0] = 1.0


def test_shape_validation():
    with pytest.raises(DimensionError):
        GridField(np.zeros((4, 5)))
    with pytest.raises(GridMismatchError):
        gaussian(1, 16) + gaussian(1, 32)


def test_plane_wave_propagation():
    N, L, t = 32, L1, 0.37
    m = 3
    f = plane_wave(1, N, L, [m])
    xi = 2 * math.pi * m / L
    expected = np.exp(-1j * xi**2 * t) * f.samples
    assert np.max(np.abs(free_propagate(f, t).samples - expected)) < 1e-12
    assert free_propagate(f, 0.0) is f


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_unitarity_and_semigroup(t, s, seed):
    f = rand_field(seed)
    a = free_propagate(free_propagate(f, t), s)
    b = free_propagate(f, t + s)
    assert abs(a.l2_norm() - f.l2_norm()) <= 1e-12 * f.l2_norm()
    assert np.max(np.abs(a.samples - b.samples)) <= 1e-12 * np.max(np.abs(f.samples))


def test_propagator_matches_dense_dft():
    from quinticgp.kernels import propagator_matrix

    f = rand_field(3)
    U = propagator_matrix(f.N, f.L, 0.8)
    assert np.allclose(U @ f.samples, free_propagate(f, 0.8).samples, atol=1e-12)


def test_sobolev_single_mode():
    N, L, m = 32, L1, (2, -1, 1)
    f = plane_wave(3, N, L, m)
    xi = 2 * math.pi * np.linalg.norm(m) / L
    l2 = math.sqrt(L**3)
    assert math.isclose(sobolev_norm(f, 0), l2, rel_tol=1e-12)
    assert math.isclose(sobolev_norm(f, 1), xi * l2, rel_tol=1e-12)
    assert math.isclose(sobolev_norm(f, -1), l2 / xi, rel_tol=1e-12)
    assert math.isclose(sobolev_norm(f, 1, homogeneous=False), math.sqrt(1 + xi**2) * l2, rel_tol=1e-12)


def test_sobolev_matches_gradient():
    f = rand_field(5, dim=3, N=16)
    grad2 = sum(derivative(f, a).l2_norm() ** 2 for a in range(3))
    assert math.isclose(sobolev_norm(f, 1), math.sqrt(grad2), rel_tol=1e-12)


def test_negative_norm_needs_mean_zero():
    f = gaussian(1, 32, L1)
    with pytest.raises(MeanNonzeroError):
        sobolev_norm(f, -1)
    assert sobolev_norm(f, -1, project_mean=True) == sobolev_norm(f.project_mean(), -1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_cauchy_schwarz_in_frequency(seed):
    f = rand_field(seed, dim=3, N=8, L=5.0, K=2)
    assert sobolev_norm(f, -1) * sobolev_norm(f, 1) >= f.l2_norm() ** 2 * (1 - 1e-12)


def test_convolution_against_direct_sum():
    N, L = 32, 7.0
    v = gaussian(1, N, L, width=0.6)
    f = rand_field(2, N=N, L=L, mean_zero=False)
    (x,) = coordinates(1, N, L)
    dx = L / N
    direct = np.empty(N, complex)
    for i in range(N):
        # v sampled on [-L/2, L/2): v(x_i - x_j) by periodic wrap of the index difference
        idx = (i - np.arange(N) + N // 2) % N
        direct[i] = np.sum(v.samples[idx] * f.samples) * dx
    assert np.allclose(convolve(v, f).samples, direct, atol=1e-12)


def test_trilinear_examples():
    one = GridField(np.ones(16), 4.0)
    assert np.allclose(trilinear_A(Potential.delta(1.0), one, one).samples, 1.0)
    assert np.allclose(trilinear_A(Potential.delta(-1.0), one * 2.0, one * 3.0).samples, -6.0)
    V = gaussian_potential(1, 16, 4.0, width=0.3)
    a = trilinear_A(V, one * 2.0, one * 3.0)
    assert np.allclose(a.samples, 6.0, atol=1e-12)
    assert math.isclose(V.p_norm(1.0), 1.0, rel_tol=1e-12)
    assert Potential.delta(-1).p_norm(1.0) == 1.0


def test_trilinear_grid_mismatch():
    with pytest.raises(GridMismatchError):
        trilinear_A(Potential.delta(), gaussian(1, 16), gaussian(1, 32))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_young_bound_p1(seed):
    # ||A||_q <= ||V||_1 ||f||_s1 ||g||_s2 with 1/q = 1/s1 + 1/s2
    N, L = 32, 6.0
    f = rand_field(seed, N=N, L=L, mean_zero=False)
    g = rand_field(seed + 1, N=N, L=L, mean_zero=False)
    V = gaussian_potential(1, N, L, width=0.4)
    lhs = trilinear_A(V, f, g).lp_norm(2)
    rhs = V.p_norm(1) * f.lp_norm(4) * g.lp_norm(4)
    assert lhs <= rhs * (1 + 1e-12)


def test_conic_partition():
    p = conic_symbols(16, L1)
    assert np.max(np.abs(p.sum(axis=0) - 1)) < 1e-12
    ks = np.meshgrid(*[np.fft.fftfreq(16, 1 / 16)] * 3, indexing="ij")
    sq = [k * k for k in ks]
    for j in range(3):
        rest = sum(sq) - sq[j]
        supp = p[j] > 0
        # support condition, away from the diagonal rays where every p_j = 1/3
        assert np.all(sq[j][supp] >= 0.5 * rest[supp] - 1e-9)
        assert np.all(sq[j][supp] >= sum(sq)[supp] / 3 - 1e-9)
        full = sq[j] >= 2 * rest
        assert np.allclose(p[j][full & (sum(sq) > 0)], 1.0)


def test_conic_project():
    f = plane_wave(3, 16, L1, (3, 0, 0))
    assert np.allclose(conic_project(f, 1).samples, f.samples, atol=1e-12)
    assert np.allclose(conic_project(f, 2).samples, 0, atol=1e-12)
    g = rand_field(4, dim=3, N=16)
    total = sum(conic_project(g, j) for j in (1, 2, 3))
    assert np.max(np.abs(total.samples - g.samples)) < 1e-12 * np.max(np.abs(g.samples))
    z = zeros(3, 8)
    assert np.all(conic_project(z, 3).samples == 0)
    with pytest.raises(DimensionError):
        conic_project(gaussian(1, 16), 1)


def test_gaussian_normalization():
    f = gaussian(3, 32, width=3.0, normalize=True)
    assert math.isclose(f.l2_norm(), 1.0, rel_tol=1e-12)
    # continuum value pi^{3/4} w^{3/2} for the unnormalized profile
    g = gaussian(3, 32, width=3.0)
    assert math.isclose(g.l2_norm(), math.pi**0.75 * 3.0**1.5, rel_tol=1e-8)


def test_band_limited_modes():
    rng = np.random.default_rng(0)
    modes = random_modes(rng, 1, 3)
    f = field_from_modes(modes, 16, 2 * math.pi)
    (x,) = coordinates(1, 16, 2 * math.pi)
    direct = sum(modes[m + 3] * np.exp(1j * m * x) for m in range(-3, 4))
    assert np.allclose(f.samples, direct, atol=1e-12)
    # same modes on a finer grid give the same function
    g = field_from_modes(modes, 32, 2 * math.pi)
    assert math.isclose(f.l2_norm(), g.l2_norm(), rel_tol=1e-12)
    with pytest.raises(ValueError):
        field_from_modes(random_modes(rng, 1, 8), 16)


def test_sobolev_lp_consistent_with_l2():
    f = rand_field(9, dim=3, N=16)
    assert math.isclose(sobolev_lp_norm(f, 1, 2), sobolev_norm(f, 1), rel_tol=1e-12)


@pytest.mark.parametrize("dim,N", [(1, 16), (3, 8)])
def test_field_file_roundtrip(tmp_path, dim, N):
    f = GridField(rand_field(11, dim=dim, N=N).samples.astype(np.complex64), 3.25)
    path = tmp_path / "f.qgpf"
    write_field(path, f)
    g = read_field(path)
    assert g.grid_key() == f.grid_key()
    assert np.array_equal(g.samples, f.samples)
    assert field_to_bytes(g) == path.read_bytes()
    assert path.read_bytes().startswith(b"QGPFIELD 1 dim=%d N=%d" % (dim, N))


def test_field_file_errors():
    data = field_to_bytes(gaussian(1, 8))
    with pytest.raises(ValueError):
        field_from_bytes(data[:-4])
    with pytest.raises(ValueError):
        field_from_bytes(b"NOPE\n")
