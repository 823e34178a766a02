"""Collision maps indexing the terms of the n-fold Duhamel expansion.

A collision map records, for each Duhamel level ``l = 1..n``, which existing
particle line the level-``l`` contraction ``B_{j; k+2l-1, k+2l}`` hits.  Only the
values at the contraction sites are stored: ``targets[l-1] = sigma(k+2l-1)``.

The board-game reduction swaps adjacent columns whose contractions act on
disjoint particle lines, relabels the created pairs in later columns, and
transposes the corresponding time variables.  Repeated descents reduce every
map to the unique member of its commutation orbit with non-decreasing targets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

DEFAULT_ENUMERATION_CAP = 10**6


class CapExceededError(RuntimeError):
    """Raised when an enumeration would exceed the configured size cap."""


class IllegalMoveError(ValueError):
    """Raised when a requested column swap violates the move rule."""


@dataclass(frozen=True)
class CollisionMap:
    k: int
    n: int
    targets: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(x) for x in self.targets))
        if self.k < 1 or self.n < 0:
            raise ValueError(f"need k >= 1 and n >= 0, got k={self.k}, n={self.n}")
        if len(self.targets) != self.n:
            raise ValueError(f"expected {self.n} targets, got {len(self.targets)}")
        for level, t in enumerate(self.targets, start=1):
            if not 1 <= t <= self.k + 2 * (level - 1):
                raise ValueError(
                    f"target {t} at level {level} outside 1..{self.k + 2 * (level - 1)}"
                )

    def created(self, level: int) -> tuple[int, int]:
        """Particle indices created by the contraction at ``level`` (1-based)."""
        return (self.k + 2 * level - 1, self.k + 2 * level)

    @property
    def particles(self) -> int:
        return self.k + 2 * self.n

    def is_echelon(self) -> bool:
        return all(a <= b for a, b in zip(self.targets, self.targets[1:]))

    def __str__(self):
        return ",".join(str(t) for t in self.targets)


def count_maps(k: int, n: int) -> int:
    """Closed-form size of M_{k,n}: k(k+2)...(k+2n-2)."""
    if k < 1 or n < 0:
        raise ValueError("need k >= 1 and n >= 0")
    return math.prod(k + 2 * i for i in range(n))


def enumerate_maps(k: int, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> list[CollisionMap]:
    """All collision maps of M_{k,n} in lexicographic order of targets."""
    total = count_maps(k, n)
    if total > cap:
        raise CapExceededError(f"|M_{{{k},{n}}}| = {total} exceeds cap {cap}")
    ranges = [range(1, k + 2 * i + 1) for i in range(n)]
    return [CollisionMap(k, n, t) for t in itertools.product(*ranges)]


@dataclass(frozen=True)
class BoardMatrix:
    """The (k+2n-1) x n board of contraction labels with one highlight per column.

    ``time_row[c]`` is the (1-based) index of the original time variable
    carried by column ``c+1``.
    """

    k: int
    n: int
    highlight: tuple[int, ...]
    time_row: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.k + 2 * self.n - 1, self.n)

    def entry(self, row: int, col: int):
        """Label of entry (row, col), both 1-based; ``None`` for structural zeros."""
        if row > self.k + 2 * (col - 1):
            return None
        return (row, self.k + 2 * col - 1, self.k + 2 * col)

    @property
    def entries(self) -> list[list]:
        rows, cols = self.shape
        return [[self.entry(i, c) for c in range(1, cols + 1)] for i in range(1, rows + 1)]

    def to_map(self) -> CollisionMap:
        return CollisionMap(self.k, self.n, self.highlight)

    def render(self) -> str:
        """Plain-text drawing; highlighted entries are wrapped in asterisks."""
        rows, cols = self.shape
        head = ["t%d" % r for r in self.time_row]
        lines = ["  ".join(f"{h:>12}" for h in head)]
        for i in range(1, rows + 1):
            cells = []
            for c in range(1, cols + 1):
                e = self.entry(i, c)
                if e is None:
                    s = "0"
                else:
                    s = "B_{%d;%d,%d}" % e
                    if self.highlight[c - 1] == i:
                        s = "*" + s + "*"
                cells.append(f"{s:>12}")
            lines.append("  ".join(cells))
        return "\n".join(lines)


def to_board(cmap: CollisionMap) -> BoardMatrix:
    return BoardMatrix(cmap.k, cmap.n, cmap.targets, tuple(range(1, cmap.n + 1)))


def swap_columns(board: BoardMatrix, col: int) -> BoardMatrix:
    """Commute columns ``col`` and ``col+1`` (1-based) without the descent check.

    Legal when the two contractions hit different particles and the later one
    does not hit a particle created by the earlier one.  The move is an
    involution.
    """
    k, n = board.k, board.n
    if not 1 <= col <= n - 1:
        raise IllegalMoveError(f"column {col} outside 1..{n - 1}")
    t = list(board.highlight)
    a, b = t[col - 1], t[col]
    lo = (k + 2 * col - 1, k + 2 * col)
    hi = (k + 2 * col + 1, k + 2 * col + 2)
    if b in lo:
        raise IllegalMoveError(f"column {col + 1} hits particle {b} created by column {col}")
    if a == b:
        raise IllegalMoveError(f"columns {col} and {col + 1} hit the same particle {a}")
    relabel = {lo[0]: hi[0], lo[1]: hi[1], hi[0]: lo[0], hi[1]: lo[1]}
    t[col - 1], t[col] = b, a
    for c in range(col + 1, n):
        t[c] = relabel.get(t[c], t[c])
    rho = list(board.time_row)
    rho[col - 1], rho[col] = rho[col], rho[col - 1]
    return BoardMatrix(k, n, tuple(t), tuple(rho))


def acceptable_move(board: BoardMatrix, col: int) -> BoardMatrix:
    """Apply the acceptable move at ``col``: requires a strict descent there."""
    if not 1 <= col <= board.n - 1:
        raise IllegalMoveError(f"column {col} outside 1..{board.n - 1}")
    a, b = board.highlight[col - 1], board.highlight[col]
    if not b < a:
        raise IllegalMoveError(f"no descent at column {col}: {a} -> {b}")
    return swap_columns(board, col)


@dataclass(frozen=True)
class MoveTrace:
    moves: tuple[int, ...]
    time_row: tuple[int, ...]

    def replay(self, cmap: CollisionMap) -> CollisionMap:
        board = to_board(cmap)
        for col in self.moves:
            board = acceptable_move(board, col)
        if board.time_row != self.time_row:
            raise AssertionError("trace replay produced a different time permutation")
        return board.to_map()


def reduce_to_echelon(cmap: CollisionMap) -> tuple[CollisionMap, MoveTrace]:
    """Reduce ``cmap`` to non-decreasing targets by moves at the first descent."""
    board = to_board(cmap)
    moves = []
    guard = max(1, cmap.n * cmap.n)
    while True:
        h = board.highlight
        col = next((c for c in range(1, cmap.n) if h[c] < h[c - 1]), None)
        if col is None:
            break
        if len(moves) >= guard:
            raise RuntimeError(f"reduction of {cmap} exceeded {guard} moves")
        board = acceptable_move(board, col)
        moves.append(col)
    return board.to_map(), MoveTrace(tuple(moves), board.time_row)


@dataclass
class EchelonClass:
    representative: CollisionMap
    members: list[CollisionMap] = field(default_factory=list)
    traces: dict[CollisionMap, MoveTrace] = field(default_factory=dict)

    def __len__(self):
        return len(self.members)


def partition_classes(k: int, n: int, cap: int = DEFAULT_ENUMERATION_CAP) -> list[EchelonClass]:
    """Group M_{k,n} by echelon representative, in order of first appearance."""
    classes: dict[CollisionMap, EchelonClass] = {}
    for m in enumerate_maps(k, n, cap):
        rep, trace = reduce_to_echelon(m)
        cls = classes.setdefault(rep, EchelonClass(rep))
        cls.members.append(m)
        cls.traces[m] = trace
    return list(classes.values())


def class_bound(k: int, n: int) -> int:
    return 2 ** (k + 3 * n - 2)


@dataclass(frozen=True)
class SimplexImage:
    """Image of the ordered simplex {t_n <= ... <= t_1 <= t} under a relabeling.

    A point ``s`` of the image is related to a simplex point ``u`` by
    ``s[c] = u[time_row[c] - 1]``.
    """

    time_row: tuple[int, ...]
    t: float

    def from_simplex(self, u):
        return tuple(u[r - 1] for r in self.time_row)

    def to_simplex(self, s):
        u = [0.0] * len(s)
        for c, r in enumerate(self.time_row):
            u[r - 1] = s[c]
        return tuple(u)

    def contains(self, s, tol: float = 0.0) -> bool:
        u = self.to_simplex(s)
        chain = (self.t,) + tuple(u) + (0.0,)
        return all(chain[i] + tol >= chain[i + 1] for i in range(len(chain) - 1))


def class_time_domains(cls: EchelonClass, t: float) -> list[SimplexImage]:
    """One permuted simplex per member; together they realize the class domain."""
    return [SimplexImage(cls.traces[m].time_row, t) for m in cls.members]
