"""Quintic NLS / Hartree flow, factorized hierarchy residuals, de Finetti mixtures
and direct evaluation of single Duhamel terms.

Sign convention: i d/dt phi = -Lap phi + A[V, |phi|^2, |phi|^2] phi, with the
coupling inside V.  The matching mild form of the hierarchy is
gamma(t) = U(t) gamma(0) - i int_0^t U(t - s) sum_j B_j gamma^{(k+2)}(s) ds.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .collision import CollisionMap, EchelonClass, class_time_domains
from .fields import GridField, Potential, free_propagate, read_field, sobolev_norm, trilinear_A, write_field
from .kernels import (
    FactorizedKernel,
    Term,
    contract_B,
    dense_contract,
    dense_trace_norm,
    propagator_matrix,
    trace_norm,
    tree_kernel,
)
from .quadrature import simplex_rule
from .trees import build_forest


class BlowupError(RuntimeError):
    pass


class SizeCapError(RuntimeError):
    pass


class SnapshotError(ValueError):
    pass


# --- NLS solver -----------------------------------------------------------------


@dataclass
class NlsTrajectory:
    times: np.ndarray
    snapshots: list
    potential: Potential
    dt: float
    scheme: str = "strang"

    @property
    def final(self) -> GridField:
        return self.snapshots[-1]

    @property
    def coupling(self) -> float:
        return self.potential.strength if self.potential.kind == "delta" else float("nan")


def nonlinearity(phi: GridField, V: Potential) -> GridField:
    rho = phi.abs2()
    return trilinear_A(V, rho, rho)


def _nonlinear_step(phi: GridField, V: Potential, tau: float) -> GridField:
    # |phi| is invariant under this flow, so the phase rotation is exact
    return phi * np.exp(-1j * tau * nonlinearity(phi, V).samples)


def nls_solve(phi0: GridField, V: Potential, T: float, steps: int, save_every: int = 1,
              blowup_factor: float = 1e6) -> NlsTrajectory:
    """Strang splitting: half nonlinear rotation, exact free step, half rotation."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = T / steps
    phi = phi0
    start = max(phi0.lp_norm(np.inf), 1e-300)
    times, snaps = [0.0], [phi0]
    for i in range(1, steps + 1):
        phi = _nonlinear_step(phi, V, dt / 2)
        phi = free_propagate(phi, dt)
        phi = _nonlinear_step(phi, V, dt / 2)
        if phi.lp_norm(np.inf) > blowup_factor * start:
            raise BlowupError(f"sup norm grew by more than {blowup_factor:g} at t={i * dt:g}")
        if i % save_every == 0 or i == steps:
            times.append(i * dt)
            snaps.append(phi)
    return NlsTrajectory(np.array(times), snaps, V, dt)


def mass(phi: GridField) -> float:
    return phi.l2_norm() ** 2


def energy(phi: GridField, lam: float) -> float:
    """int |grad phi|^2 + (lam/3) int |phi|^6 for the delta interaction."""
    kinetic = sobolev_norm(phi, 1.0) ** 2
    return kinetic + lam / 3.0 * float(np.sum(np.abs(phi.samples) ** 6) * phi.cell)


# --- hierarchy residual -----------------------------------------------------------


def _trapezoid_weights(times: np.ndarray, upto: int) -> np.ndarray:
    ts = times[: upto + 1]
    w = np.zeros(len(ts))
    h = np.diff(ts)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def residual_kernel(traj: NlsTrajectory, index: int | None = None) -> FactorizedKernel:
    """k = 1 residual gamma(t) - U(t)gamma(0) + i int U(t - s) B gamma^(3)(s) ds, factorized.

    The time integral is the trapezoid rule on the stored snapshot times.
    """
    if len(traj.snapshots) < 2:
        raise SnapshotError("need at least two snapshots")
    index = len(traj.snapshots) - 1 if index is None else index
    t = traj.times[index]
    w = _trapezoid_weights(traj.times, index)
    terms = list(FactorizedKernel.pure(traj.snapshots[index]))
    terms += list(FactorizedKernel.pure(traj.snapshots[0]).propagate(t).scale(-1.0))
    for s, ws, phi in zip(traj.times, w, traj.snapshots):
        P = FactorizedKernel.pure(phi)
        D = contract_B(P, P, P, traj.potential).propagate(t - s)
        # i * ws * D: put the phase on chi
        terms += [Term(tm.c * ws, tm.chi * 1j, tm.psi) for tm in D]
    return FactorizedKernel(terms)


def _kron_terms(a: FactorizedKernel, b: FactorizedKernel):
    """Two-particle terms of a (x) b as flattened outer products."""
    out = []
    for x in a:
        for y in b:
            out.append((x.c * y.c, np.kron(x.chi.samples.ravel(), y.chi.samples.ravel()),
                        np.kron(x.psi.samples.ravel(), y.psi.samples.ravel())))
    return out


def _lowrank_trace_norm(terms, cell: float) -> float:
    X = np.stack([t[1] for t in terms], axis=1) * np.sqrt(cell)
    Y = np.stack([t[2] for t in terms], axis=1) * np.sqrt(cell)
    C = np.diag([t[0] for t in terms])
    _, rx = np.linalg.qr(X)
    _, ry = np.linalg.qr(Y)
    return float(np.linalg.svd(rx @ C @ ry.conj().T, compute_uv=False).sum())


def hierarchy_residual(traj: NlsTrajectory, k: int = 1, index: int | None = None) -> float:
    """Trace norm of the k-particle mild-form residual of the factorized state (k = 1, 2)."""
    if k == 1:
        return trace_norm(residual_kernel(traj, index))
    if k != 2:
        raise ValueError("only k = 1 and k = 2 are supported")
    if len(traj.snapshots) < 2:
        raise SnapshotError("need at least two snapshots")
    index = len(traj.snapshots) - 1 if index is None else index
    t = traj.times[index]
    w = _trapezoid_weights(traj.times, index)
    Pt = FactorizedKernel.pure(traj.snapshots[index])
    P0 = FactorizedKernel.pure(traj.snapshots[0]).propagate(t)
    terms = _kron_terms(Pt, Pt) + _kron_terms(P0.scale(-1.0), P0)
    for s, ws, phi in zip(traj.times, w, traj.snapshots):
        P = FactorizedKernel.pure(phi)
        D = contract_B(P, P, P, traj.potential).propagate(t - s).scale(ws)
        D = FactorizedKernel(Term(tm.c, tm.chi * 1j, tm.psi) for tm in D)
        Q = P.propagate(t - s)
        terms += _kron_terms(D, Q) + _kron_terms(Q, D)
    return _lowrank_trace_norm(terms, Pt.grid.cell**2)


# --- finite de Finetti mixtures -------------------------------------------------


@dataclass
class MixtureHierarchy:
    """gamma^(k) = sum_i mu_i (|phi_i><phi_i|)^{(x) k}."""

    weights: list
    states: list
    mode: str = "sphere"
    tol: float = 1e-12

    def __post_init__(self):
        if len(self.weights) != len(self.states):
            raise ValueError("weights and states differ in length")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        norms = [s.l2_norm() for s in self.states]
        if self.mode == "sphere":
            if abs(sum(self.weights) - 1) > self.tol or any(abs(n - 1) > 1e-10 for n in norms):
                raise ValueError("sphere mode needs unit total weight and unit-norm states")
        elif self.mode == "ball":
            if any(n > 1 + 1e-10 for n in norms):
                raise ValueError("ball mode needs states with norm <= 1")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    def coefficients(self, k: int) -> list[tuple[float, GridField]]:
        return [(w, s) for w, s in zip(self.weights, self.states)]

    def traced_coefficients(self, k: int) -> list[tuple[float, GridField]]:
        """Tr_{k+1} gamma^(k+1) in mixture algebra: Tr|phi><phi| = |phi|^2."""
        return [(w * s.l2_norm() ** 2, s) for w, s in zip(self.weights, self.states)]

    def dense(self, k: int) -> np.ndarray:
        """Dense kernel of gamma^(k) (1d, small k)."""
        out = 0
        for w, s in zip(self.weights, self.states):
            P = np.outer(s.samples, np.conj(s.samples))
            M = P
            for _ in range(k - 1):
                M = np.kron(M, P)
            out = out + w * M
        return out


def dense_partial_trace(M: np.ndarray, N: int, k: int, dx: float) -> np.ndarray:
    """Trace out the last particle of a dense (k+1)-particle kernel."""
    a = M.reshape(N**k, N, N**k, N)
    return np.einsum("aibi->ab", a) * dx


def mixture_partial_trace(h: MixtureHierarchy, k: int = 1, dense: bool = True) -> dict:
    """Compare Tr_{k+1} gamma^(k+1) against gamma^(k)."""
    traced = h.traced_coefficients(k)
    deficit = [tw / w if w else float("nan") for (tw, _), w in zip(traced, h.weights)]
    algebraic_gap = max(abs(tw - w) for (tw, _), w in zip(traced, h.weights))
    report = {"mode": h.mode, "k": k, "algebraic_gap": algebraic_gap, "deficit": deficit}
    g = h.states[0]
    if dense and g.dim == 1 and k == 1:
        lhs = dense_partial_trace(h.dense(k + 1), g.N, k, g.dx)
        rhs = h.dense(k)
        report["dense_gap"] = float(np.max(np.abs(lhs - rhs)) / max(np.max(np.abs(rhs)), 1e-300))
    report["admissible"] = algebraic_gap <= h.tol and report.get("dense_gap", 0.0) <= h.tol
    return report


# --- single Duhamel terms ---------------------------------------------------------

MAX_DENSE_N = 64
MAX_LINES = 10


def _leaf(phi: GridField, leaf_time: float, leaf_evolution: str) -> GridField:
    if leaf_evolution == "fixed":
        return phi
    if leaf_evolution == "free":
        return free_propagate(phi, leaf_time)
    raise ValueError(f"unknown leaf evolution {leaf_evolution!r}")


def duhamel_direct(cmap: CollisionMap, t: float, times, phi: GridField, V: Potential,
                   leaf_evolution: str = "fixed") -> list[np.ndarray]:
    """J^k(t, t_1..t_n; sigma) applied to (|phi><phi|)^{(x)(k+2n)}, one dense kernel per particle.

    Works line by line: a contraction replaces the kernel of the hit particle
    and removes the two created ones; propagators act on every live line.
    """
    k, n = cmap.k, cmap.n
    times = tuple(float(s) for s in times)
    if len(times) != n:
        raise ValueError(f"need {n} times")
    if phi.dim != 1 or phi.N > MAX_DENSE_N or k + 2 * n > MAX_LINES:
        raise SizeCapError(f"dense evaluation limited to d=1, N<={MAX_DENSE_N}, k+2n<={MAX_LINES}")
    levels = (float(t),) + times
    leaf_t = levels[-1]
    lf = _leaf(phi, leaf_t, leaf_evolution).samples
    P = np.outer(lf, np.conj(lf))
    kern = {i: P.copy() for i in range(1, k + 2 * n + 1)}
    for level in range(n, 0, -1):
        j = cmap.targets[level - 1]
        a, b = cmap.created(level)
        kern[j] = dense_contract(kern[j], kern.pop(a), kern.pop(b), V)
        U = propagator_matrix(phi.N, phi.L, levels[level - 1] - levels[level])
        Uh = U.conj().T
        for i in kern:
            kern[i] = U @ kern[i] @ Uh
    return [kern[i] for i in range(1, k + 1)]


def factorized_product(cmap: CollisionMap, t: float, times, phi: GridField, V: Potential,
                       leaf_evolution: str = "fixed") -> list[FactorizedKernel]:
    """The same term assembled tree by tree from the recursive kernels."""
    times = tuple(float(s) for s in times)
    leaf_t = times[-1] if times else float(t)
    lf = _leaf(phi, leaf_t, leaf_evolution)
    tdict = {level: s for level, s in enumerate(times, start=1)}
    forest = build_forest(cmap)
    return [tree_kernel(tree, t, tdict, lf, V, leaf_t) for tree in forest.trees]


def product_gap(direct: list[np.ndarray], factored: list, dx: float) -> float:
    """Relative telescoping bound on the trace norm of (x)A_j - (x)B_j."""
    A = direct
    B = [f.dense() if isinstance(f, FactorizedKernel) else f for f in factored]
    na = [dense_trace_norm(a, dx) for a in A]
    nb = [dense_trace_norm(b, dx) for b in B]
    total = 0.0
    for j in range(len(A)):
        diff = dense_trace_norm(A[j] - B[j], dx)
        total += diff * np.prod(nb[:j]) * np.prod(na[j + 1:])
    scale = np.prod(na)
    return float(total / scale) if scale > 0 else float(total)


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


@dataclass
class ClassIntegralResult:
    lhs: np.ndarray
    rhs: np.ndarray
    gap: float
    lhs_norm: float
    order: int
    members: int = field(default=0)

    @property
    def relative_gap(self) -> float:
        return self.gap / self.lhs_norm if self.lhs_norm > 0 else self.gap


def class_integral_check(cls: EchelonClass, t: float, phi: GridField, V: Potential, order: int = 8,
                         leaf_evolution: str = "free", rhs_scheme: str = "reverse") -> ClassIntegralResult:
    """Sum of member simplex integrals against the representative over the class domain.

    The left side uses the forward simplex rule, the right side (by default)
    the reverse rule pulled through each member's time permutation, so the
    two sides share no nodes and the gap measures quadrature convergence.
    """
    rep = cls.representative
    n, k = rep.n, rep.k
    dx = phi.dx

    def J(cmap, ts):
        return _kron_all(duhamel_direct(cmap, t, ts, phi, V, leaf_evolution))

    fwd_nodes, fwd_w = simplex_rule(n, t, order, "forward")
    rev_nodes, rev_w = simplex_rule(n, t, order, rhs_scheme)
    lhs = 0
    for m in cls.members:
        for pts, w in zip(fwd_nodes, fwd_w):
            lhs = lhs + w * J(m, pts)
    rhs = 0
    for dom in class_time_domains(cls, t):
        for pts, w in zip(rev_nodes, rev_w):
            rhs = rhs + w * J(rep, dom.from_simplex(pts))
    cell = dx**k
    gap = dense_trace_norm(lhs - rhs, cell)
    return ClassIntegralResult(lhs, rhs, gap, dense_trace_norm(lhs, cell), order, len(cls.members))


# --- trajectory files ---------------------------------------------------------------


def write_trajectory(path, traj: NlsTrajectory, header: str = ""):
    os.makedirs(path, exist_ok=True)
    names = []
    for i, snap in enumerate(traj.snapshots):
        name = f"snap_{i:05d}.qgpf"
        write_field(os.path.join(path, name), snap)
        names.append(name)
    with open(os.path.join(path, "manifest.txt"), "w") as fh:
        if header:
            fh.write(header)
        fh.write(f"scheme = {traj.scheme}\n")
        fh.write(f"dt = {float(traj.dt)!r}\n")
        fh.write(f"potential = {traj.potential.describe()}\n")
        fh.write(f"count = {len(names)}\n")
        for t, name in zip(traj.times, names):
            fh.write(f"snapshot = {float(t)!r} {name}\n")


def read_trajectory(path, potential: Potential) -> NlsTrajectory:
    times, snaps, dt, scheme = [], [], None, "strang"
    with open(os.path.join(path, "manifest.txt")) as fh:
        for line in fh:
            if "=" not in line or line.startswith("#"):
                continue
            key, val = (s.strip() for s in line.split("=", 1))
            if key == "snapshot":
                t, name = val.split()
                times.append(float(t))
                snaps.append(read_field(os.path.join(path, name)))
            elif key == "dt":
                dt = float(val)
            elif key == "scheme":
                scheme = val
    return NlsTrajectory(np.array(times), snaps, potential, dt, scheme)
