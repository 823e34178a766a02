"""One-particle kernels kept as signed sums of rank-one products chi(x) conj(psi(x')).

The contraction ``B_{1;2,3}`` glues the diagonals of kernels 2 and 3 onto
kernel 1 at ``x`` (first term) or at ``x'`` (second term, with a minus sign).
The interaction strength lives inside the potential: ``Potential.delta(lam)``
gives ``A[V, f, g] = lam * f * g``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .fields import GridField, Potential, free_propagate, riesz_potential, sobolev_norm, trilinear_A
from .trees import TreeGraph, Vertex


class DistinguishedCollisionError(ValueError):
    """More than one distinguished factor enters a single contraction."""


class MissingTimeError(KeyError):
    pass


@dataclass(frozen=True)
class Term:
    c: float
    chi: GridField
    psi: GridField
    chi_flag: bool = False
    psi_flag: bool = False


class FactorizedKernel:
    """K(x; x') = sum_b c_b chi_b(x) conj(psi_b(x'))."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        if self.terms:
            self.terms[0].chi.check_grid(*[t.chi for t in self.terms], *[t.psi for t in self.terms])

    @classmethod
    def pure(cls, phi: GridField, flag: bool = False) -> "FactorizedKernel":
        """|phi><phi|."""
        return cls([Term(1.0, phi, phi, flag, flag)])

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def grid(self):
        return self.terms[0].chi

    def scale(self, a: float) -> "FactorizedKernel":
        return FactorizedKernel(replace(t, c=t.c * a) for t in self.terms)

    def propagate(self, t: float) -> "FactorizedKernel":
        """U(t) K U(t)^*: both factors evolve freely."""
        if t == 0:
            return self
        return FactorizedKernel(
            replace(tm, chi=free_propagate(tm.chi, t), psi=free_propagate(tm.psi, t)) for tm in self.terms
        )

    def flags(self) -> list[tuple[bool, bool]]:
        return [(t.chi_flag, t.psi_flag) for t in self.terms]

    def drop_zero_terms(self, tol: float = 0.0) -> "FactorizedKernel":
        """Optional cleanup pass; never applied implicitly."""
        keep = [t for t in self.terms if t.chi.l2_norm() * t.psi.l2_norm() > tol]
        return FactorizedKernel(keep)

    def dense(self) -> np.ndarray:
        """Kernel values on the grid (1d only), M[i, j] = K(x_i; x_j)."""
        g = self.grid
        if g.dim != 1:
            raise ValueError("dense kernels are only built in one dimension")
        out = np.zeros((g.N, g.N), dtype=np.complex128)
        for t in self.terms:
            out += t.c * np.outer(t.chi.samples, np.conj(t.psi.samples))
        return out


def contract_B(k1: FactorizedKernel, k2: FactorizedKernel, k3: FactorizedKernel, V: Potential,
               mark_distinguished: bool = False) -> FactorizedKernel:
    """B_{1;2,3}(K1 x K2 x K3) as a factorized kernel with 2 * N1 * N2 * N3 terms.

    ``mark_distinguished`` flags the factor that absorbs A in every output term
    (used at the last contraction of the distinguished tree).
    """
    out = []
    for a in k1:
        for b in k2:
            for c in k3:
                inner = (b.chi_flag, b.psi_flag, c.chi_flag, c.psi_flag)
                if sum((a.chi_flag, a.psi_flag) + inner) > 1:
                    raise DistinguishedCollisionError("two distinguished factors in one contraction")
                A = trilinear_A(V, b.chi * b.psi.conj(), c.chi * c.psi.conj())
                sign = a.c * b.c * c.c
                absorbed = any(inner) or mark_distinguished
                out.append(Term(sign, a.chi * A, a.psi, a.chi_flag or absorbed, a.psi_flag))
                out.append(Term(-sign, a.chi, a.psi * A.conj(), a.chi_flag, a.psi_flag or absorbed))
    return FactorizedKernel(out)


def theta_recursion(tree: TreeGraph, times: dict, phi: GridField, V: Potential, leaf_time: float | None = None,
                    vertex: Vertex | None = None) -> FactorizedKernel:
    """Kernel Theta at ``vertex`` (default: the first internal vertex) of ``tree``.

    ``times`` maps global level -> time.  Leaves carry |phi><phi| at
    ``leaf_time`` (default: the time of the tree's last internal vertex).
    """
    if tree.m == 0:
        raise ValueError("tree has no internal vertices")
    top = vertex if vertex is not None else tree.local(1)
    levels = sorted(v.index for v in tree.subtree(top) if v.kind == "v")
    for level in levels:
        if level not in times:
            raise MissingTimeError(level)
    if leaf_time is None:
        leaf_time = times[levels[-1]]
    last = tree.internals[-1] if tree.distinguished else None
    leaf = FactorizedKernel.pure(phi)

    def t_of(v):
        return times[v.index] if v.kind == "v" else leaf_time

    def build(v):
        if v.kind == "u":
            return leaf
        kids = [build(c).propagate(times[v.index] - t_of(c)) for c in tree.child_order(v)]
        return contract_B(*kids, V, mark_distinguished=(v.index == last))

    return build(top)


def tree_kernel(tree: TreeGraph, t: float, times: dict, phi: GridField, V: Potential,
                leaf_time: float) -> FactorizedKernel:
    """One-particle kernel of a whole tree at the outer time ``t``."""
    child = tree.children[tree.root][0]
    if child.kind == "u":
        return FactorizedKernel.pure(phi).propagate(t - leaf_time)
    theta = theta_recursion(tree, times, phi, V, leaf_time=leaf_time)
    return theta.propagate(t - times[child.index])


def trace_bound(K: FactorizedKernel, s: float = 0.0, project_mean: bool = False) -> float:
    """sum_b |c_b| |chi_b|_{H^s} |psi_b|_{H^s}, an upper bound for the weighted trace norm."""
    return float(sum(abs(t.c) * sobolev_norm(t.chi, s, True, project_mean) * sobolev_norm(t.psi, s, True, project_mean)
                     for t in K))


def trace_norm(K: FactorizedKernel, s: float = 0.0, project_mean: bool = False) -> float:
    """Exact trace norm of |grad|^s K |grad|^s via thin QR of the factor matrices."""
    g = K.grid
    w = np.sqrt(g.cell)
    X = np.stack([riesz_potential(t.chi, s, project_mean).samples.ravel() for t in K], axis=1) * w
    Y = np.stack([riesz_potential(t.psi, s, project_mean).samples.ravel() for t in K], axis=1) * w
    C = np.diag([t.c for t in K])
    _, rx = np.linalg.qr(X)
    _, ry = np.linalg.qr(Y)
    return float(np.linalg.svd(rx @ C @ ry.conj().T, compute_uv=False).sum())


# --- dense one-dimensional oracles -----------------------------------------------


def dft_matrix(N: int) -> np.ndarray:
    j = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(j, j) / N)


def propagator_matrix(N: int, L: float, t: float) -> np.ndarray:
    """Dense exp(i t d^2/dx^2) on the 1d grid, assembled from an explicit DFT matrix."""
    F = dft_matrix(N)
    m = np.arange(N)
    m = np.where(m < N // 2, m, m - N)
    xi = 2 * np.pi * m / L
    return (F.conj().T / N) @ np.diag(np.exp(-1j * xi**2 * t)) @ F


def convolution_matrix(v: GridField) -> np.ndarray:
    """Dense periodic convolution f -> int v(x - y) f(y) dy for v sampled on [-L/2, L/2)."""
    N = v.N
    i = np.arange(N)
    idx = (i[:, None] - i[None, :] + N // 2) % N
    return v.samples[idx] * v.dx


def dense_trace_norm(M: np.ndarray, dx: float) -> float:
    """Trace norm of the integral operator with kernel M on a grid of spacing dx."""
    return float(dx * np.linalg.svd(M, compute_uv=False).sum())


def dense_A(V: Potential, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """A[V, f, g] for sampled 1d arrays, with convolutions as dense matrices."""
    if V.kind == "delta":
        return V.strength * f * g
    return (convolution_matrix(V.v) @ f) * (convolution_matrix(V.w) @ g)


def dense_contract(K1: np.ndarray, K2: np.ndarray, K3: np.ndarray, V: Potential) -> np.ndarray:
    """B_{1;2,3} on dense kernels: glue diag(K2), diag(K3) at x and subtract at x'."""
    A = dense_A(V, np.diag(K2).copy(), np.diag(K3).copy())
    return K1 * A[:, None] - K1 * A[None, :]
