"""Complex fields on a periodic box, with their Fourier duals.

Conventions: a field on ``[-L/2, L/2)^d`` sampled at ``N`` points per axis has
Fourier coefficients ``fhat_k = mean(f * exp(-i k x))`` so that
``f(x) = sum_k fhat_k exp(i k x)``.  L^2 norms use the cell volume ``(L/N)^d``
in physical space and ``L^d`` in Fourier space; the two agree by Parseval.
"""

from __future__ import annotations

import functools
import io
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

DEFAULT_BOX = 2 * np.pi * 8


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("QUINTICGP_THREADS", "1")))
    except ValueError:
        return 1


class GridMismatchError(ValueError):
    pass


class MeanNonzeroError(ValueError):
    """Negative homogeneous Sobolev norm requested for a field with a zero mode."""


class DimensionError(ValueError):
    pass


@functools.lru_cache(maxsize=32)
def _wavenumbers(dim: int, N: int, L: float) -> tuple[np.ndarray, ...]:
    k1 = 2 * np.pi * sfft.fftfreq(N, d=L / N)
    ks = np.meshgrid(*([k1] * dim), indexing="ij")
    for k in ks:
        k.setflags(write=False)
    return tuple(ks)


@functools.lru_cache(maxsize=32)
def _xi2(dim: int, N: int, L: float) -> np.ndarray:
    out = sum(k * k for k in _wavenumbers(dim, N, L))
    out.setflags(write=False)
    return out


def coordinates(dim: int, N: int, L: float = DEFAULT_BOX) -> tuple[np.ndarray, ...]:
    x1 = -L / 2 + L * np.arange(N) / N
    return tuple(np.meshgrid(*([x1] * dim), indexing="ij"))


class GridField:
    """Immutable complex samples on a periodic grid with a cached spectrum."""

    __slots__ = ("_samples", "L", "__dict__")

    def __init__(self, samples, L: float = DEFAULT_BOX):
        a = np.array(samples, dtype=np.complex128)
        if a.ndim not in (1, 3) or len(set(a.shape)) != 1:
            raise DimensionError(f"expected an N or N^3 array, got shape {a.shape}")
        a.setflags(write=False)
        self._samples = a
        self.L = float(L)

    @classmethod
    def from_spectrum(cls, coeffs, L: float = DEFAULT_BOX) -> "GridField":
        c = np.asarray(coeffs)
        f = cls(sfft.ifftn(c, workers=_workers()) * c.size, L)
        spec = np.array(c, dtype=np.complex128)
        spec.setflags(write=False)
        f.__dict__["spectrum"] = spec
        return f

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def dim(self) -> int:
        return self._samples.ndim

    @property
    def N(self) -> int:
        return self._samples.shape[0]

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell(self) -> float:
        return self.dx**self.dim

    @functools.cached_property
    def spectrum(self) -> np.ndarray:
        s = sfft.fftn(self._samples, workers=_workers()) / self._samples.size
        s.setflags(write=False)
        return s

    @property
    def wavenumbers(self):
        return _wavenumbers(self.dim, self.N, self.L)

    @property
    def xi2(self) -> np.ndarray:
        return _xi2(self.dim, self.N, self.L)

    def grid_key(self):
        return (self.dim, self.N, self.L)

    def check_grid(self, *others):
        for o in others:
            if o.grid_key() != self.grid_key():
                raise GridMismatchError(f"grid {o.grid_key()} != {self.grid_key()}")

    def mean(self) -> complex:
        return complex(self.spectrum.flat[0])

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self._samples) ** 2) * self.cell))

    def spectral_l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.spectrum) ** 2) * self.L**self.dim))

    def lp_norm(self, p: float) -> float:
        a = np.abs(self._samples)
        if np.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.cell) ** (1.0 / p))

    def inner(self, other: "GridField") -> complex:
        """<self, other> = integral of conj(self) * other."""
        self.check_grid(other)
        return complex(np.vdot(self._samples, other._samples) * self.cell)

    def multiplier(self, symbol) -> "GridField":
        return GridField.from_spectrum(self.spectrum * symbol, self.L)

    def conj(self) -> "GridField":
        return GridField(np.conj(self._samples), self.L)

    def abs2(self) -> "GridField":
        return GridField(np.abs(self._samples) ** 2, self.L)

    def project_mean(self) -> "GridField":
        spec = np.array(self.spectrum)
        spec.flat[0] = 0.0
        return GridField.from_spectrum(spec, self.L)

    def _coerce(self, other):
        if isinstance(other, GridField):
            self.check_grid(other)
            return other._samples
        return other

    def __add__(self, other):
        return GridField(self._samples + self._coerce(other), self.L)

    __radd__ = __add__

    def __sub__(self, other):
        return GridField(self._samples - self._coerce(other), self.L)

    def __mul__(self, other):
        return GridField(self._samples * self._coerce(other), self.L)

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(-self._samples, self.L)

    def __repr__(self):
        return f"GridField(dim={self.dim}, N={self.N}, L={self.L:g})"


def zeros(dim: int, N: int, L: float = DEFAULT_BOX) -> GridField:
    return GridField(np.zeros((N,) * dim), L)


def free_propagate(f: GridField, t: float) -> GridField:
    """exp(i t Laplacian): Fourier multiplier exp(-i |xi|^2 t)."""
    if t == 0:
        return f
    return f.multiplier(np.exp(-1j * f.xi2 * t))


def _check_mean_zero(f: GridField):
    scale = f.spectral_l2_norm()
    if abs(f.mean()) * np.sqrt(f.L**f.dim) > 1e-10 * max(scale, 1e-300):
        raise MeanNonzeroError("negative homogeneous norm of a field with nonzero mean")


def sobolev_norm(f: GridField, s: float, homogeneous: bool = True, project_mean: bool = False) -> float:
    """Weighted l^2 norm of the spectrum, weights |xi|^{2s} or (1+|xi|^2)^s."""
    xi2 = f.xi2
    spec2 = np.abs(f.spectrum) ** 2
    if homogeneous:
        if s < 0:
            if not project_mean:
                _check_mean_zero(f)
            w = np.zeros_like(xi2)
            nz = xi2 > 0
            w[nz] = xi2[nz] ** s
        elif s == 0:
            w = np.ones_like(xi2)
        else:
            w = xi2**s
    else:
        w = (1.0 + xi2) ** s
    return float(np.sqrt(np.sum(w * spec2) * f.L**f.dim))


def riesz_potential(f: GridField, s: float, project_mean: bool = False) -> GridField:
    """|grad|^s f; the zero mode is dropped (checked first when s < 0)."""
    xi2 = f.xi2
    if s < 0 and not project_mean:
        _check_mean_zero(f)
    sym = np.zeros_like(xi2)
    nz = xi2 > 0
    sym[nz] = xi2[nz] ** (s / 2)
    if s == 0:
        sym[...] = 1.0
    return f.multiplier(sym)


def sobolev_lp_norm(f: GridField, s: float, p: float, project_mean: bool = False) -> float:
    """Homogeneous W^{s,p} norm: L^p norm of |grad|^s f."""
    return riesz_potential(f, s, project_mean).lp_norm(p)


def derivative(f: GridField, axis: int) -> GridField:
    return f.multiplier(1j * f.wavenumbers[axis])


def convolve(v: GridField, f: GridField) -> GridField:
    """Periodic convolution integral (v * f)(x) = int v(x - y) f(y) dy."""
    v.check_grid(f)
    vol = v.L**v.dim
    # v is sampled on [-L/2, L/2); shift its spectrum back to the origin
    phase = np.exp(-1j * sum(k * (-v.L / 2) for k in v.wavenumbers))
    return GridField.from_spectrum(vol * v.spectrum * phase * f.spectrum, v.L)


@dataclass(frozen=True)
class Potential:
    """Three-body interaction: lam*delta(y)delta(z), or separable v(y)w(z)."""

    kind: str
    strength: float = 1.0
    v: GridField | None = None
    w: GridField | None = None

    @classmethod
    def delta(cls, lam: float = 1.0) -> "Potential":
        return cls("delta", float(lam))

    @classmethod
    def separable(cls, v: GridField, w: GridField) -> "Potential":
        v.check_grid(w)
        return cls("separable", 1.0, v, w)

    def p_norm(self, p: float) -> float:
        if self.kind == "delta":
            # the delta case carries |lam| as its L^1 mass; other exponents are infinite
            return abs(self.strength)
        return self.v.lp_norm(p) * self.w.lp_norm(p)

    def describe(self) -> str:
        if self.kind == "delta":
            return f"delta(lambda={self.strength:g})"
        return f"separable(|v|_1={self.v.lp_norm(1):.6g}, |w|_1={self.w.lp_norm(1):.6g})"


def gaussian_potential(dim: int, N: int, L: float = DEFAULT_BOX, width: float = 1.0, mass: float = 1.0,
                       sign: float = 1.0) -> Potential:
    """Separable potential with v = w = Gaussian of the given width and L^1 mass."""
    r2 = sum(x * x for x in coordinates(dim, N, L))
    g = np.exp(-r2 / (2 * width**2))
    g = g * (mass / (np.sum(g) * (L / N) ** dim))
    v = GridField(sign * g, L)
    return Potential.separable(v, GridField(g, L))


def trilinear_A(V: Potential, f: GridField, g: GridField) -> GridField:
    """A[V, f, g](x) = int int V(x - y1, x - y2) f(y1) g(y2) dy1 dy2."""
    f.check_grid(g)
    if V.kind == "delta":
        return f * g * V.strength
    V.v.check_grid(f)
    return convolve(V.v, f) * convolve(V.w, g)


def _smooth_transition(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@functools.lru_cache(maxsize=8)
def conic_symbols(N: int, L: float = DEFAULT_BOX) -> np.ndarray:
    """Symbols p_1, p_2, p_3 of a conic partition of unity on the 3d lattice.

    p_j is 1 where xi_j^2 >= 2 * (sum of the other squares) and vanishes where
    xi_j^2 < (1/2) * (sum of the others).  On the diagonal rays
    |xi_1| = |xi_2| = |xi_3| (and at xi = 0) every ratio equals 1/2 exactly and
    no smooth choice can sum to one, so those modes get 1/3 each.
    """
    ks = _wavenumbers(3, N, L)
    sq = [k * k for k in ks]
    total = sum(sq)
    raw = []
    for j in range(3):
        rest = total - sq[j]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rest > 0, sq[j] / np.where(rest > 0, rest, 1.0), np.inf)
        raw.append(_smooth_transition((ratio - 0.5) / 1.5))
    raw = np.array(raw)
    norm = raw.sum(axis=0)
    flat = norm == 0
    out = np.where(flat, 1.0 / 3.0, raw / np.where(flat, 1.0, norm))
    out.setflags(write=False)
    return out


def conic_project(f: GridField, j: int) -> GridField:
    """Apply the conic multiplier P_j (axis j in 1..3)."""
    if f.dim != 3:
        raise DimensionError("conic decomposition needs a 3d field")
    if j not in (1, 2, 3):
        raise ValueError(f"axis {j} not in 1..3")
    return f.multiplier(conic_symbols(f.N, f.L)[j - 1])


# --- test-data profiles ---------------------------------------------------------


def gaussian(dim: int, N: int, L: float = DEFAULT_BOX, width: float = 2.0, amplitude: complex = 1.0,
             center=None, momentum=None, normalize: bool = False) -> GridField:
    xs = coordinates(dim, N, L)
    center = np.zeros(dim) if center is None else np.asarray(center, float)
    momentum = np.zeros(dim) if momentum is None else np.asarray(momentum, float)
    r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
    phase = sum(p * x for p, x in zip(momentum, xs))
    f = GridField(amplitude * np.exp(-r2 / (2 * width**2) + 1j * phase), L)
    if normalize:
        f = f * (1.0 / f.l2_norm())
    return f


def plane_wave(dim: int, N: int, L: float = DEFAULT_BOX, mode=None, amplitude: complex = 1.0) -> GridField:
    """amplitude * exp(i xi.x) with xi = 2 pi mode / L."""
    mode = np.ones(dim, int) if mode is None else np.asarray(mode, int)
    xs = coordinates(dim, N, L)
    xi = 2 * np.pi * mode / L
    return GridField(amplitude * np.exp(1j * sum(k * x for k, x in zip(xi, xs))), L)


def random_modes(rng: np.random.Generator, dim: int, K: int, mean_zero: bool = True,
                 decay: float = 0.0) -> np.ndarray:
    """Complex Gaussian coefficients on integer modes |m_i| <= K, shape (2K+1,)*dim."""
    shape = (2 * K + 1,) * dim
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if decay:
        m = np.meshgrid(*([np.arange(-K, K + 1)] * dim), indexing="ij")
        c = c / (1.0 + sum(x * x for x in m)) ** (decay / 2)
    if mean_zero:
        c[(K,) * dim] = 0.0
    return c


def field_from_modes(modes: np.ndarray, N: int, L: float = DEFAULT_BOX) -> GridField:
    """Band-limited field with the given centered mode block, sampled at N points."""
    K = (modes.shape[0] - 1) // 2
    if 2 * K >= N:
        raise ValueError(f"{2 * K + 1} modes do not fit on an N={N} grid")
    dim = modes.ndim
    spec = np.zeros((N,) * dim, dtype=np.complex128)
    idx = np.r_[0 : K + 1, N - K : N]
    src = np.r_[K : 2 * K + 1, 0:K]
    spec[np.ix_(*([idx] * dim))] = modes[np.ix_(*([src] * dim))]
    # modes are defined relative to x = 0; the grid starts at -L/2
    shift = np.exp(1j * sum(k * (-L / 2) for k in _wavenumbers(dim, N, L)))
    return GridField.from_spectrum(spec * shift, L)


# --- binary field files ---------------------------------------------------------

_MAGIC = b"QGPFIELD"


def field_to_bytes(f: GridField) -> bytes:
    header = "%s 1 dim=%d N=%d L=%r layout=C-complex64-le\n" % (_MAGIC.decode(), f.dim, f.N, f.L)
    return header.encode("ascii") + np.ascontiguousarray(f.samples, dtype="<c8").tobytes()


def field_from_stream(stream) -> GridField:
    line = stream.readline()
    parts = line.decode("ascii").split()
    if not parts or parts[0] != _MAGIC.decode():
        raise ValueError("not a field record")
    meta = dict(p.split("=", 1) for p in parts[2:])
    dim, N, L = int(meta["dim"]), int(meta["N"]), float(meta["L"])
    if meta.get("layout") != "C-complex64-le":
        raise ValueError(f"unsupported layout {meta.get('layout')}")
    count = N**dim
    raw = stream.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated field record")
    data = np.frombuffer(raw, dtype="<c8").reshape((N,) * dim)
    return GridField(data.astype(np.complex128), L)


def write_field(path, f: GridField):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(f))


def read_field(path) -> GridField:
    with open(path, "rb") as fh:
        return field_from_stream(fh)


def field_from_bytes(data: bytes) -> GridField:
    return field_from_stream(io.BytesIO(data))
