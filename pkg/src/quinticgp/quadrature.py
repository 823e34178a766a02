"""Gauss-Legendre rules on intervals, cubes and ordered simplices."""

from __future__ import annotations

import functools
import itertools

import numpy as np


@functools.lru_cache(maxsize=64)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1) / 2, w / 2


def gauss_legendre(a: float, b: float, order: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [a, b]."""
    x, w = _leggauss(order)
    return a + (b - a) * x, (b - a) * w


def cube_rule(dim: int, T: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre on [0, T]^dim; nodes have shape (order**dim, dim)."""
    x, w = gauss_legendre(0.0, T, order)
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)])
    return nodes, weights


def simplex_rule(n: int, t: float, order: int, scheme: str = "forward") -> tuple[np.ndarray, np.ndarray]:
    """Rule on {t_n <= ... <= t_1 <= t}; columns of the node array are t_1..t_n.

    ``forward`` collapses the cube by t_i = t * u_1 * ... * u_i.  ``reverse``
    applies the same map to the gaps measured from the top, t_i = t - tau_{n+1-i},
    which gives a different node set for the same integral.
    """
    if n == 0:
        return np.zeros((1, 0)), np.ones(1)
    u, w = _leggauss(order)
    nodes, weights = [], []
    for idx in itertools.product(range(order), repeat=n):
        uu = u[list(idx)]
        pts = t * np.cumprod(uu)
        jac = t**n * np.prod([uu[j] ** (n - 1 - j) for j in range(n)])
        nodes.append(pts)
        weights.append(jac * np.prod(w[list(idx)]))
    nodes = np.array(nodes)
    if scheme == "reverse":
        nodes = t - nodes[:, ::-1]
    elif scheme != "forward":
        raise ValueError(f"unknown simplex scheme {scheme!r}")
    return nodes, np.array(weights)


def simplex_quadrature(n: int, t: float, integrand, order: int = 16, scheme: str = "forward"):
    """Integral of ``integrand(times)`` over the ordered simplex.

    The integrand may return anything supporting ``+`` and scalar ``*``.
    """
    nodes, weights = simplex_rule(n, t, order, scheme)
    total = None
    for pts, wt in zip(nodes, weights):
        val = integrand(tuple(pts)) * wt
        total = val if total is None else total + val
    return total
