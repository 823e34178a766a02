"""Empirical constants for the multilinear space-time estimates and the recursive bounds.

Every check returns an ``EstimateReport`` of LHS/RHS ratios over a seeded
ensemble.  Fields are band-limited: their Fourier coefficients live on integer
modes ``|m_i| <= K`` and are sampled at several grid sizes, so a refinement
study sees the same continuous fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .fields import (
    DEFAULT_BOX,
    GridField,
    Potential,
    _wavenumbers,
    _workers,
    coordinates,
    field_from_modes,
    gaussian_potential,
    random_modes,
    riesz_potential,
    sobolev_lp_norm,
    sobolev_norm,
    trilinear_A,
)
from .kernels import theta_recursion
from .quadrature import cube_rule, gauss_legendre
from .trees import TreeGraph, Vertex, subtree_internal_count

EPS_MAX = 1.0 / 24.0
DEFAULT_NODES = 64


class CalibrationError(ValueError):
    pass


class ExponentError(ValueError):
    pass


@dataclass
class EstimateReport:
    name: str
    ratios: list
    discarded: int = 0
    seed: int | None = None
    parameters: dict = field(default_factory=dict)
    refinement: list = field(default_factory=list)  # (N, ratio_max)
    violations: int = 0  # discarded trials whose LHS was nonzero

    @property
    def trials(self) -> int:
        return len(self.ratios) + self.discarded

    @property
    def ratio_max(self) -> float:
        return float(max(self.ratios)) if self.ratios else float("nan")

    @property
    def ratio_mean(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else float("nan")

    @property
    def ratio_std(self) -> float:
        return float(np.std(self.ratios)) if self.ratios else float("nan")

    def finite(self) -> bool:
        return bool(self.ratios) and all(math.isfinite(r) for r in self.ratios)

    def refinement_spread(self) -> float:
        """Largest ratio between refinement levels' ratio maxima."""
        vals = [r for _, r in self.refinement]
        if len(vals) < 2:
            return 1.0
        return max(vals) / min(vals)

    def record(self) -> dict:
        out = {
            "estimate": self.name,
            "trials": self.trials,
            "accepted": len(self.ratios),
            "discarded": self.discarded,
            "violations": self.violations,
            "ratio_max": self.ratio_max,
            "ratio_mean": self.ratio_mean,
            "ratio_std": self.ratio_std,
            "seed": self.seed,
        }
        for key, val in sorted(self.parameters.items()):
            out[f"param.{key}"] = val
        for n, r in self.refinement:
            out[f"refinement.N{n}"] = r
        return out


def _ratio(lhs: float, rhs: float):
    """(ratio or None, violated) with the RHS = 0 convention."""
    if rhs <= 0 or not math.isfinite(rhs):
        return None, lhs > 0
    return lhs / rhs, False


# --- ensembles --------------------------------------------------------------------


@dataclass(frozen=True)
class ModeSpec:
    """Band-limited field given by its centered block of integer-mode coefficients."""

    modes: np.ndarray

    def sample(self, N: int, L: float) -> GridField:
        return field_from_modes(self.modes, N, L)


@dataclass(frozen=True)
class PacketSpec:
    """Localized Gaussian wave packet with its mean removed."""

    center: tuple
    momentum: tuple
    width: float
    amplitude: complex

    def sample(self, N: int, L: float) -> GridField:
        xs = coordinates(len(self.center), N, L)
        r2 = sum((x - c) ** 2 for x, c in zip(xs, self.center))
        ph = sum(k * x for k, x in zip(self.momentum, xs))
        return GridField(self.amplitude * np.exp(-r2 / (2 * self.width**2) + 1j * ph), L).project_mean()


def mode_ensemble(seed: int, trials: int, arity: int, K: int, dim: int = 3, decay: float = 1.0):
    """Reproducible list of ``trials`` tuples of band-limited field specs."""
    rng = np.random.default_rng(seed)
    return [tuple(ModeSpec(random_modes(rng, dim, K, mean_zero=True, decay=decay)) for _ in range(arity))
            for _ in range(trials)]


def packet_ensemble(seed: int, trials: int, arity: int, dim: int = 3, width: float = 3.0,
                    spread: float = 4.0, kmax: float = 0.5):
    """Reproducible tuples of wave packets near the origin (whole-space-like data)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        row = []
        for _ in range(arity):
            c = tuple(rng.uniform(-spread, spread, dim))
            k = tuple(rng.uniform(-kmax, kmax, dim))
            a = complex(rng.standard_normal(), rng.standard_normal())
            row.append(PacketSpec(c, k, width * rng.uniform(0.8, 1.2), a))
        out.append(tuple(row))
    return out


def sample_tuple(specs, N: int, L: float = DEFAULT_BOX):
    return tuple(s.sample(N, L) for s in specs)


# --- raw space-time helpers ---------------------------------------------------------


def _hs_from_samples(p: np.ndarray, xi2: np.ndarray, s: float, L: float, project: bool = True) -> float:
    spec = sfft.fftn(p, workers=_workers()) / p.size
    w = np.zeros_like(xi2)
    nz = xi2 > 0
    w[nz] = xi2[nz] ** s
    if s == 0:
        w[...] = 1.0
    if not project and s < 0 and abs(spec.flat[0]) > 0:
        raise ValueError("nonzero mean")
    return float(np.sqrt(np.sum(w * np.abs(spec) ** 2) * L**p.ndim))


class _Evolver:
    """Free evolution of several fields at arbitrary times, sharing the symbol grid."""

    def __init__(self, fields):
        g = fields[0]
        g.check_grid(*fields)
        self.L, self.N, self.dim = g.L, g.N, g.dim
        self.xi2 = g.xi2
        self.specs = [f.spectrum for f in fields]
        self.size = g.samples.size

    def at(self, t: float):
        ph = np.exp(-1j * self.xi2 * t)
        return [sfft.ifftn(s * ph, workers=_workers()) * self.size for s in self.specs]


def _conv_symbol(v: GridField) -> np.ndarray:
    vol = v.L**v.dim
    phase = np.exp(-1j * sum(k * (-v.L / 2) for k in v.wavenumbers))
    return vol * v.spectrum * phase


def _A_raw(V: Potential, f: np.ndarray, g: np.ndarray, symbols) -> np.ndarray:
    if V.kind == "delta":
        return V.strength * f * g
    sv, sw = symbols
    n = f.size
    cf = sfft.ifftn(sv * sfft.fftn(f, workers=_workers()) / n, workers=_workers()) * n
    cg = sfft.ifftn(sw * sfft.fftn(g, workers=_workers()) / n, workers=_workers()) * n
    return cf * cg


def quintic_lhs(fields, T: float, V: Potential | None = None, nodes: int = DEFAULT_NODES,
                exponents=(-1.0, 1.0)) -> dict:
    """L^1_t H^s_x norms of the quintic space-time product for each s in ``exponents``.

    Without a potential the product is prod_j e^{it Lap} f_j; with one it is
    A[V, u1 u2, u3 u4] u5 with u_j = e^{it Lap} f_j.
    """
    ev = _Evolver(fields)
    ts, ws = gauss_legendre(0.0, T, nodes)
    symbols = None
    if V is not None and V.kind == "separable":
        symbols = (_conv_symbol(V.v), _conv_symbol(V.w))
    out = {s: 0.0 for s in exponents}
    for t, w in zip(ts, ws):
        u = ev.at(t)
        if V is None:
            p = u[0] * u[1] * u[2] * u[3] * u[4]
        else:
            p = _A_raw(V, u[0] * u[1], u[2] * u[3], symbols) * u[4]
        for s in exponents:
            out[s] += w * _hs_from_samples(p, ev.xi2, s, ev.L)
    return out


# --- individual checks --------------------------------------------------------------


def _check_eps(eps: float):
    if not 0 <= eps <= EPS_MAX:
        raise ValueError(f"eps={eps} outside the supported window [0, 1/24]")


def _needs_3d(fields):
    if fields[0].dim != 3:
        raise ValueError("these estimates are three-dimensional")


def gp_multilinear_trial(fields, T: float = 1.0, nodes: int = DEFAULT_NODES) -> dict:
    """(lhs, rhs) pairs for both GP estimates from one space-time pass."""
    _needs_3d(fields)
    lhs = quintic_lhs(fields, T, None, nodes)
    h1 = [sobolev_norm(f, 1.0) for f in fields]
    hm1 = sobolev_norm(fields[0], -1.0)
    return {
        "gp-hm1": (lhs[-1.0], hm1 * np.prod(h1[1:])),
        "gp-h1": (lhs[1.0], float(np.prod(h1))),
    }


def hartree_multilinear_trial(fields, V: Potential, eps: float, T: float = 1.0,
                              nodes: int = DEFAULT_NODES) -> dict:
    """(lhs, rhs) for the Hartree H^1 estimate and the H^-1 estimate at every slot m."""
    _needs_3d(fields)
    _check_eps(eps)
    lhs = quintic_lhs(fields, T, V, nodes)
    pref = T ** (3 * eps) * V.p_norm(1.0 / (1.0 - eps))
    h1 = [sobolev_norm(f, 1.0) for f in fields]
    out = {"hartree-h1": (lhs[1.0], pref * float(np.prod(h1)))}
    for m in range(5):
        rest = np.prod([h for i, h in enumerate(h1) if i != m])
        out[f"hartree-hm1-m{m + 1}"] = (lhs[-1.0], pref * sobolev_norm(fields[m], -1.0) * rest)
    return out


def split_trial(f: GridField, g: GridField):
    """|fg|_{H^-1} against |f|_{W^{-1,6}} |g|_{W^{1,3/2}}."""
    _needs_3d([f])
    lhs = sobolev_norm(f * g, -1.0, project_mean=True)
    rhs = sobolev_lp_norm(f, -1.0, 6.0) * sobolev_lp_norm(g, 1.0, 1.5)
    return lhs, rhs


def final_trial(phi: GridField, V: Potential, eps: float = 0.0):
    """|A[V, |phi|^2, |phi|^2] phi|_{H^-1} against |V| |phi|^5 (homogeneous if eps = 0)."""
    _needs_3d([phi])
    _check_eps(eps)
    rho = phi.abs2()
    lhs = sobolev_norm(trilinear_A(V, rho, rho) * phi, -1.0, project_mean=True)
    if eps == 0:
        rhs = V.p_norm(1.0) * sobolev_norm(phi, 1.0) ** 5
    else:
        rhs = V.p_norm(1.0 / (1.0 - eps)) * sobolev_norm(phi, 1.0, homogeneous=False) ** 5
    return lhs, rhs


def validate_beckner(p: float, q: float, s1: float, s2: float, tol: float = 1e-12):
    if p < 1 or q < 1 or s1 < 1 or s2 < 1:
        raise ExponentError("exponents must be >= 1")
    inv_pp = 0.0 if p == 1 else 1.0 - 1.0 / p
    if abs(1.0 / q + 2.0 * inv_pp - (1.0 / s1 + 1.0 / s2)) > tol:
        raise ExponentError(f"1/q + 2/p' != 1/s1 + 1/s2 for p={p}, q={q}, s=({s1}, {s2})")


def beckner_trial(V: Potential, f: GridField, g: GridField, p: float, q: float, s1: float, s2: float):
    validate_beckner(p, q, s1, s2)
    lhs = trilinear_A(V, f, g).lp_norm(q)
    rhs = V.p_norm(p) * f.lp_norm(s1) * g.lp_norm(s2)
    return lhs, rhs


# --- ensemble drivers ---------------------------------------------------------------


def _collect(name, pairs, seed, params, N=None) -> EstimateReport:
    rep = EstimateReport(name, [], seed=seed, parameters=dict(params))
    for lhs, rhs in pairs:
        r, bad = _ratio(lhs, rhs)
        if r is None:
            rep.discarded += 1
            rep.violations += int(bad)
        else:
            rep.ratios.append(r)
    if N is not None:
        rep.refinement.append((N, rep.ratio_max))
    return rep


def _merge_levels(reports_by_N: dict) -> dict:
    """Combine per-resolution reports: keep the finest level's ratios, all maxima."""
    levels = sorted(reports_by_N)
    out = {}
    for name in reports_by_N[levels[0]]:
        finest = reports_by_N[levels[-1]][name]
        finest.refinement = [(N, reports_by_N[N][name].ratio_max) for N in levels]
        out[name] = finest
    return out


def check_gp_multilinear(trials: int = 100, seed: int = 0, Ns=(24, 48), K: int | None = None,
                         T: float = 1.0, L: float = DEFAULT_BOX, nodes: int = DEFAULT_NODES,
                         ensemble=None) -> dict:
    """Reports for the GP H^-1 and H^1 quintic estimates, one pass per trial."""
    K = K if K is not None else min(Ns) // 4
    ensemble = ensemble if ensemble is not None else mode_ensemble(seed, trials, 5, K)
    params = {"T": T, "L": L, "K": K, "nodes": nodes}
    by_N = {}
    for N in Ns:
        rows = [gp_multilinear_trial(sample_tuple(m, N, L), T, nodes) for m in ensemble]
        by_N[N] = {name: _collect(name, [r[name] for r in rows], seed, params) for name in rows[0]}
    return _merge_levels(by_N)


def check_hartree_multilinear(V_factory, eps: float = 0.0, trials: int = 100, seed: int = 0, Ns=(24, 48),
                              K: int | None = None, T: float = 1.0, L: float = DEFAULT_BOX,
                              nodes: int = DEFAULT_NODES, ensemble=None) -> dict:
    """Reports for the Hartree H^1 estimate and the H^-1 estimate at m = 1..5.

    ``V_factory(N, L)`` builds the potential on each grid.
    """
    _check_eps(eps)
    K = K if K is not None else min(Ns) // 4
    ensemble = ensemble if ensemble is not None else mode_ensemble(seed, trials, 5, K)
    by_N = {}
    for N in Ns:
        V = V_factory(N, L)
        params = {"T": T, "L": L, "K": K, "eps": eps, "nodes": nodes, "potential": V.describe()}
        rows = [hartree_multilinear_trial(sample_tuple(m, N, L), V, eps, T, nodes) for m in ensemble]
        by_N[N] = {name: _collect(name, [r[name] for r in rows], seed, params) for name in rows[0]}
    return _merge_levels(by_N)


def check_negative_sobolev_product(trials: int = 100, seed: int = 0, Ns=(24, 48), K: int | None = None,
                                   L: float = DEFAULT_BOX, ensemble=None) -> EstimateReport:
    K = K if K is not None else min(Ns) // 4
    ensemble = ensemble if ensemble is not None else mode_ensemble(seed, trials, 2, K)
    by_N = {}
    for N in Ns:
        pairs = [split_trial(*sample_tuple(m, N, L)) for m in ensemble]
        by_N[N] = {"split": _collect("split", pairs, seed, {"L": L, "K": K})}
    return _merge_levels(by_N)["split"]


def check_final_bound(V_factory, eps: float = 0.0, trials: int = 100, seed: int = 0, Ns=(24, 48),
                      K: int | None = None, L: float = DEFAULT_BOX, ensemble=None) -> EstimateReport:
    K = K if K is not None else min(Ns) // 4
    ensemble = ensemble if ensemble is not None else mode_ensemble(seed, trials, 1, K)
    by_N = {}
    for N in Ns:
        V = V_factory(N, L)
        pairs = [final_trial(sample_tuple(m, N, L)[0], V, eps) for m in ensemble]
        params = {"L": L, "K": K, "eps": eps, "potential": V.describe()}
        by_N[N] = {"final": _collect("final", pairs, seed, params)}
    return _merge_levels(by_N)["final"]


def check_beckner(V_factory, p: float = 1.0, q: float = 2.0, s1: float = 4.0, s2: float = 4.0,
                  trials: int = 100, seed: int = 0, N: int = 24, K: int | None = None,
                  L: float = DEFAULT_BOX, dim: int = 3, ensemble=None) -> EstimateReport:
    validate_beckner(p, q, s1, s2)
    K = K if K is not None else N // 4
    ensemble = ensemble if ensemble is not None else mode_ensemble(seed, trials, 2, K, dim=dim)
    V = V_factory(N, L)
    pairs = [beckner_trial(V, *sample_tuple(m, N, L), p, q, s1, s2) for m in ensemble]
    params = {"p": p, "q": q, "s1": s1, "s2": s2, "L": L, "K": K, "potential": V.describe()}
    return _collect("beckner", pairs, seed, params, N)


def default_potential(kind: str = "separable", width: float = 1.0, lam: float = 1.0):
    """Factory for the potentials used by the ensemble drivers."""
    if kind == "delta":
        return lambda N, L: Potential.delta(lam)
    return lambda N, L: gaussian_potential(3, N, L, width=width, mass=1.0, sign=lam)


# --- recursive bound at a tree vertex ---------------------------------------------------


def _subtree_levels(tree: TreeGraph, v: Vertex):
    return sorted(u.index for u in tree.subtree(v) if u.kind == "v")


def _vertex_integral(tree, v, phi, V, T, order, s_psi, project):
    """int over the subtree's times of sum_b |psi_b|_{H^s_psi} |chi_b|_{H^1}."""
    if v.kind == "u":
        return sobolev_norm(phi, s_psi, project_mean=project) * sobolev_norm(phi, 1.0)
    levels = _subtree_levels(tree, v)
    nodes, weights = cube_rule(len(levels), T, order)
    total = 0.0
    for pts, w in zip(nodes, weights):
        times = dict(zip(levels, pts))
        theta = theta_recursion(tree, times, phi, V, leaf_time=0.0, vertex=v)
        total += w * sum(abs(tm.c) * sobolev_norm(tm.psi, s_psi, project_mean=project) * sobolev_norm(tm.chi, 1.0)
                         for tm in theta)
    return total


def check_induction_bounds(tree: TreeGraph, alpha: int, phis, V: Potential, eps: float, T: float,
                           calibrated_C: float | None, order: int = 3, variant: str = "hm1",
                           seed: int | None = None) -> EstimateReport:
    """Recursive bound at internal vertex ``alpha`` (local label) of ``tree``.

    LHS sums the vertex kernel's terms; RHS is the product of the three child
    integrals.  Each child triple produces two output terms, so the summed form
    of the per-term bound carries a factor 2.  Leaves are |phi><phi| at time 0.
    """
    if calibrated_C is None:
        raise CalibrationError("a calibrated constant is required")
    _check_eps(eps)
    v = tree.local(alpha)
    kids = tree.child_order(v)
    s_top = -1.0 if variant == "hm1" else 1.0
    pref = T ** (3 * eps) * V.p_norm(1.0 / (1.0 - eps))
    pairs = []
    for phi in phis:
        lhs = _vertex_integral(tree, v, phi, V, T, order, s_top, True)
        child_s = (1.0, 1.0, s_top)
        rhs = pref
        for c, s in zip(kids, child_s):
            rhs *= _vertex_integral(tree, c, phi, V, T, order, s, True)
        pairs.append((lhs, rhs))
    params = {"alpha": alpha, "subtree_internal": subtree_internal_count(tree, v), "eps": eps, "T": T,
              "variant": variant, "order": order, "calibrated_C": calibrated_C, "potential": V.describe()}
    rep = _collect(f"induction-{variant}", pairs, seed, params)
    rep.parameters["bound_holds"] = all(r <= 2 * calibrated_C for r in rep.ratios)
    return rep


# --- contraction of the bound sequence -------------------------------------------------


@dataclass
class DecayReport:
    bounds: list
    ratio: float
    decreasing: bool
    threshold_name: str
    threshold: float
    parameters: dict

    def record(self) -> dict:
        out = {"ratio": self.ratio, "decreasing": self.decreasing, self.threshold_name: self.threshold}
        out.update({f"param.{k}": v for k, v in sorted(self.parameters.items())})
        for n, b in enumerate(self.bounds, start=1):
            out[f"b{n}"] = b
        return out


def contraction_decay(k: int, M: float, T: float, eps: float, V_norm: float, C: float, n_max: int = 20) -> DecayReport:
    """Bounds b_n on Tr|R^{(k,-1)} gamma^(k)| after n Duhamel iterations.

    eps = 0: b_n = (C |V|)^n T M^{4(k+n)}; threshold M* = (C |V|)^{-1/4}.
    eps > 0: b_n = (C T^{3 eps} |V|)^{n-1} |V| T M^{4(k+n)}; threshold
    T* = (C |V| M^4)^{-1/(3 eps)}.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    bounds = []
    for n in range(1, n_max + 1):
        if eps == 0:
            b = (C * V_norm) ** n * T * M ** (4 * (k + n))
        else:
            b = (C * T ** (3 * eps) * V_norm) ** (n - 1) * V_norm * T * M ** (4 * (k + n))
        bounds.append(b)
    if eps == 0:
        ratio = C * V_norm * M**4
        name = "M_star"
        threshold = (C * V_norm) ** -0.25 if C * V_norm > 0 else math.inf
    else:
        ratio = C * T ** (3 * eps) * V_norm * M**4
        name = "T_star"
        base = C * V_norm * M**4
        threshold = base ** (-1.0 / (3 * eps)) if base > 0 else math.inf
    decreasing = ratio < 1 and all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]) if b1 > 0)
    params = {"k": k, "M": M, "T": T, "eps": eps, "V_norm": V_norm, "C": C, "n_max": n_max}
    return DecayReport(bounds, ratio, decreasing, name, threshold, params)


def calibrated_constant(reports) -> float:
    """Largest empirical ratio among single-step multilinear reports."""
    vals = [r.ratio_max for r in reports if r.ratios]
    if not vals:
        raise CalibrationError("no accepted trials to calibrate from")
    return float(max(vals))
