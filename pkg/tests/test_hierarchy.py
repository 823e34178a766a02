import math

import numpy as np
import pytest

from quinticgp.collision import CollisionMap, enumerate_maps, partition_classes
from quinticgp.fields import GridField, Potential, free_propagate, gaussian, gaussian_potential, plane_wave
from quinticgp.hierarchy import (
    BlowupError,
    MixtureHierarchy,
    SizeCapError,
    SnapshotError,
    class_integral_check,
    dense_partial_trace,
    duhamel_direct,
    energy,
    factorized_product,
    hierarchy_residual,
    mass,
    mixture_partial_trace,
    nls_solve,
    product_gap,
    read_trajectory,
    residual_kernel,
    write_trajectory,
)
from quinticgp.kernels import dense_contract, dense_trace_norm, propagator_matrix, trace_norm

L1 = 2 * math.pi * 4


# --- solver ---------------------------------------------------------------------


def test_free_flow_is_exact():
    phi = gaussian(1, 64, L1, width=2.0, momentum=[0.4])
    traj = nls_solve(phi, Potential.delta(0.0), 1.0, 10)
    ref = free_propagate(phi, 1.0)
    assert np.max(np.abs(traj.final.samples - ref.samples)) < 1e-12


@pytest.mark.parametrize("lam", [1.0, -1.0])
def test_plane_wave_exact(lam):
    c, m, T = 0.7, 2, 0.8
    phi = plane_wave(1, 32, L1, [m], amplitude=c)
    xi = 2 * math.pi * m / L1
    traj = nls_solve(phi, Potential.delta(lam), T, 7)
    exact = phi.samples * np.exp(-1j * (xi**2 + lam * c**4) * T)
    assert np.max(np.abs(traj.final.samples - exact)) < 1e-10


def test_conservation_1d():
    phi = gaussian(1, 64, L1, width=2.0, amplitude=1.0)
    V = Potential.delta(1.0)
    # dt = 1/400; the splitting's energy error scales as dt^2
    traj = nls_solve(phi, V, 1.0, 400)
    m0, e0 = mass(phi), energy(phi, 1.0)
    assert abs(mass(traj.final) - m0) / m0 < 1e-10
    assert abs(energy(traj.final, 1.0) - e0) / abs(e0) < 1e-6


def test_energy_is_conserved_by_exact_flow_to_second_order():
    # energy error of the splitting shrinks by about 4 per dt-halving
    phi = gaussian(1, 64, L1, width=2.0, amplitude=1.2)
    e0 = energy(phi, 1.0)
    errs = [abs(energy(nls_solve(phi, Potential.delta(1.0), 1.0, s).final, 1.0) - e0) for s in (25, 50, 100)]
    assert errs[0] > errs[1] > errs[2]
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_self_convergence_order_1d():
    phi = gaussian(1, 64, L1, width=2.0, amplitude=1.0)
    V = Potential.delta(1.0)
    ref = nls_solve(phi, V, 1.0, 1600).final
    errs = [(nls_solve(phi, V, 1.0, s).final - ref).l2_norm() for s in (25, 50, 100)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(p - 2.0) <= 0.2 for p in orders)


def test_separable_potential_solver_conserves_mass():
    N, L = 32, 2 * math.pi * 2
    phi = gaussian(1, N, L, width=1.0)
    V = gaussian_potential(1, N, L, width=0.5)
    traj = nls_solve(phi, V, 0.5, 50, save_every=10)
    assert len(traj.snapshots) == 6
    assert abs(mass(traj.final) - mass(phi)) / mass(phi) < 1e-12


def test_blowup_guard():
    phi = gaussian(1, 64, L1, width=1.0, amplitude=2.0)
    with pytest.raises(BlowupError):
        nls_solve(phi, Potential.delta(-1.0), 1.0, 50, blowup_factor=1.01)
    with pytest.raises(ValueError):
        nls_solve(phi, Potential.delta(1.0), 1.0, 0)


def test_trajectory_roundtrip(tmp_path):
    phi = gaussian(1, 32, L1, width=2.0)
    V = Potential.delta(1.0)
    traj = nls_solve(phi, V, 0.2, 4, save_every=2)
    write_trajectory(tmp_path / "run", traj, "# test header\n")
    back = read_trajectory(tmp_path / "run", V)
    assert np.array_equal(back.times, traj.times)
    assert back.dt == traj.dt
    for a, b in zip(back.snapshots, traj.snapshots):
        assert np.array_equal(a.samples, b.samples.astype(np.complex64))


# --- hierarchy residual ---------------------------------------------------------


def residual_levels(k, N, steps=(20, 40, 80)):
    phi = gaussian(1, N, L1, width=2.0)
    V = Potential.delta(1.0)
    return [hierarchy_residual(nls_solve(phi, V, 1.0, s), k) for s in steps]


def test_residual_k1_second_order():
    r = residual_levels(1, 64)
    for a, b in zip(r, r[1:]):
        assert 3.2 <= a / b <= 4.8


def test_residual_k2_second_order_and_tensor_structure():
    r2 = residual_levels(2, 32)
    r1 = residual_levels(1, 32)
    for a, b in zip(r2, r2[1:]):
        assert 3.2 <= a / b <= 4.8
    # the two-particle residual is a fixed combination of one-particle defects
    ratios = [a / b for a, b in zip(r2, r1)]
    assert max(ratios) / min(ratios) < 1.01


def test_residual_vanishes_for_free_flow():
    phi = gaussian(1, 32, L1, width=2.0)
    traj = nls_solve(phi, Potential.delta(0.0), 1.0, 10)
    assert hierarchy_residual(traj, 1) <= 1e-10
    assert hierarchy_residual(traj, 2) <= 1e-10


def test_residual_detects_wrong_sign():
    # the opposite coupling sign leaves an O(1) residual that does not shrink
    phi = gaussian(1, 32, L1, width=2.0)
    traj = nls_solve(phi, Potential.delta(1.0), 1.0, 40)
    flipped = nls_solve(phi, Potential.delta(1.0), 1.0, 40)
    flipped.potential = Potential.delta(-1.0)
    assert trace_norm(residual_kernel(flipped)) > 100 * hierarchy_residual(traj, 1)


def test_residual_needs_snapshots():
    phi = gaussian(1, 16, L1)
    traj = nls_solve(phi, Potential.delta(1.0), 1.0, 1)
    traj.snapshots = traj.snapshots[:1]
    with pytest.raises(SnapshotError):
        hierarchy_residual(traj, 1)
    with pytest.raises(ValueError):
        hierarchy_residual(nls_solve(phi, Potential.delta(1.0), 1.0, 2), 3)


# --- mixtures -------------------------------------------------------------------


def two_states(N=32):
    a = gaussian(1, N, L1, width=2.0, normalize=True)
    b = gaussian(1, N, L1, width=1.5, center=[3.0], momentum=[0.5], normalize=True)
    return a, b


def test_dense_partial_trace_oracle():
    rng = np.random.default_rng(0)
    N, dx = 4, 0.5
    M = rng.standard_normal((N * N, N * N))
    out = dense_partial_trace(M, N, 1, dx)
    ref = np.zeros((N, N))
    for a in range(N):
        for b in range(N):
            ref[a, b] = sum(M[a * N + i, b * N + i] for i in range(N)) * dx
    assert np.allclose(out, ref)


def test_single_state_exact():
    a, _ = two_states()
    r = mixture_partial_trace(MixtureHierarchy([1.0], [a]), 1)
    assert r["admissible"] and r["algebraic_gap"] <= 1e-12


def test_two_state_mixture_dense():
    a, b = two_states()
    r = mixture_partial_trace(MixtureHierarchy([0.5, 0.5], [a, b]), 1)
    assert r["dense_gap"] <= 1e-12 and r["admissible"]
    # k = 2 in mixture algebra only
    r2 = mixture_partial_trace(MixtureHierarchy([0.3, 0.7], [a, b]), 2)
    assert "dense_gap" not in r2 and r2["algebraic_gap"] <= 1e-12


def test_ball_mode_deficit():
    a, b = two_states()
    h = MixtureHierarchy([0.5, 0.5], [a * 0.9, b * 0.9], mode="ball")
    r = mixture_partial_trace(h, 1)
    assert all(abs(d - 0.81) < 1e-12 for d in r["deficit"])
    assert not r["admissible"]
    assert abs(r["dense_gap"] - 0.19) < 1e-12


def test_mixture_validation():
    a, b = two_states()
    with pytest.raises(ValueError):
        MixtureHierarchy([0.5, 0.6], [a, b])
    with pytest.raises(ValueError):
        MixtureHierarchy([1.0], [a * 2.0], mode="ball")
    with pytest.raises(ValueError):
        MixtureHierarchy([-1.0, 2.0], [a, b])
    with pytest.raises(ValueError):
        MixtureHierarchy([1.0], [a], mode="cube")


def test_mixture_symmetry():
    a, b = two_states(8)
    G = MixtureHierarchy([0.4, 0.6], [a, b]).dense(2)
    assert np.allclose(G, G.conj().T)
    # exchange of the two particles
    P = G.reshape(8, 8, 8, 8).transpose(1, 0, 3, 2).reshape(64, 64)
    assert np.allclose(P, G)


# --- direct Duhamel terms -------------------------------------------------------

N1, LS = 32, 4 * math.pi


def phi_small():
    return gaussian(1, N1, LS, width=1.5, normalize=True, momentum=[0.3])


def test_duhamel_worked_example():
    m = CollisionMap(2, 4, (1, 2, 4, 4))
    phi, V = phi_small(), Potential.delta(1.0)
    ts = (0.8, 0.6, 0.35, 0.1)
    d = duhamel_direct(m, 1.0, ts, phi, V)
    f = factorized_product(m, 1.0, ts, phi, V)
    assert product_gap(d, f, phi.dx) <= 1e-8


def test_duhamel_zero_depth():
    phi = phi_small()
    out = duhamel_direct(CollisionMap(2, 0, ()), 0.7, (), phi, Potential.delta())
    P = np.outer(phi.samples, phi.samples.conj())
    assert len(out) == 2 and all(np.array_equal(o, P) for o in out)


def test_duhamel_equal_times_collapse():
    phi, V = phi_small(), Potential.delta(1.0)
    m = CollisionMap(1, 2, (1, 2))
    (d,) = duhamel_direct(m, 0.5, (0.5, 0.5), phi, V)
    P = np.outer(phi.samples, phi.samples.conj())
    inner = dense_contract(P, P, P, V)
    assert np.allclose(d, dense_contract(P, inner, P, V), atol=1e-12)


def test_duhamel_single_level_by_hand():
    phi, V = phi_small(), Potential.delta(-1.0)
    t, t1 = 0.9, 0.4
    (d,) = duhamel_direct(CollisionMap(1, 1, (1,)), t, (t1,), phi, V)
    P = np.outer(phi.samples, phi.samples.conj())
    U = propagator_matrix(N1, LS, t - t1)
    assert np.allclose(d, U @ dense_contract(P, P, P, V) @ U.conj().T, atol=1e-12)


@pytest.mark.parametrize("leaf", ["fixed", "free"])
@pytest.mark.parametrize("k,n", [(1, 1), (1, 2), (2, 2), (1, 3)])
def test_factorization_oracle(k, n, leaf):
    phi = phi_small()
    V = gaussian_potential(1, N1, LS, width=0.6)
    rng = np.random.default_rng(k * 10 + n)
    for m in enumerate_maps(k, n):
        ts = np.sort(rng.uniform(0, 1.0, n))[::-1]
        d = duhamel_direct(m, 1.0, ts, phi, V, leaf)
        f = factorized_product(m, 1.0, ts, phi, V, leaf)
        assert product_gap(d, f, phi.dx) <= 1e-8


def test_size_caps():
    phi = gaussian(3, 8)
    with pytest.raises(SizeCapError):
        duhamel_direct(CollisionMap(1, 1, (1,)), 1.0, (0.5,), phi, Potential.delta())
    with pytest.raises(SizeCapError):
        duhamel_direct(CollisionMap(1, 5, (1,) * 5), 1.0, (0.5,) * 5, phi_small(), Potential.delta())
    with pytest.raises(ValueError):
        duhamel_direct(CollisionMap(1, 2, (1, 1)), 1.0, (0.5,), phi_small(), Potential.delta())


def test_product_gap_is_a_bound():
    rng = np.random.default_rng(1)
    A = [rng.standard_normal((6, 6)) for _ in range(2)]
    B = [a + 1e-3 * rng.standard_normal((6, 6)) for a in A]
    exact = dense_trace_norm(np.kron(A[0], A[1]) - np.kron(B[0], B[1]), 0.1**2)
    scale = dense_trace_norm(np.kron(A[0], A[1]), 0.1**2)
    assert exact / scale <= product_gap(A, B, 0.1) * (1 + 1e-12)


# --- class integral -------------------------------------------------------------

CLASS_PHI = dict(width=2.0, normalize=True)
LC = 2 * math.pi * 4


def test_singleton_class_same_rule_is_identical():
    phi = gaussian(1, 32, LC, **CLASS_PHI)
    cls = partition_classes(1, 2)[1]
    r = class_integral_check(cls, 1.0, phi, Potential.delta(1.0), order=4, rhs_scheme="forward")
    assert r.gap == 0.0


def test_zero_field_class():
    phi = GridField(np.zeros(16), LC)
    cls = partition_classes(1, 2)[0]
    r = class_integral_check(cls, 1.0, phi, Potential.delta(1.0), order=3)
    assert r.lhs_norm == 0 and r.gap == 0


def class_gaps(k, n, orders, members_at_least=1):
    phi = gaussian(1, 32, LC, **CLASS_PHI)
    V = Potential.delta(1.0)
    out = []
    for cls in partition_classes(k, n):
        if len(cls) < members_at_least:
            continue
        out.append([class_integral_check(cls, 1.0, phi, V, order=o).relative_gap for o in orders])
    return out


def test_class_integral_k1_n2():
    for gaps in class_gaps(1, 2, (4, 8, 16)):
        assert gaps[0] > gaps[1] > gaps[2] or gaps[2] < 1e-14
        assert gaps[-1] < 1e-6


def test_class_integral_multi_member_classes():
    # classes where the time domains are genuinely permuted
    groups = class_gaps(1, 3, (4, 8), members_at_least=2) + class_gaps(2, 2, (4, 8, 12), members_at_least=2)
    assert len(groups) >= 2
    for gaps in groups:
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
