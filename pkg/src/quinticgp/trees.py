"""Forests of tree graphs factorizing a Duhamel term into one-particle kernels.

Vertices: roots ``W_j`` (one per external particle), internal vertices ``v_l``
(one per contraction, carrying time ``t_l``) and leaves ``u_i`` (one per factor
of the initial product state).  Every internal vertex has three ordered child
slots: the particle line it hits, then the two lines it creates.  Each slot
holds the next contraction on that line, or the leaf of that line if none.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .collision import CollisionMap


class Vertex(NamedTuple):
    kind: str  # "W", "v" or "u"
    index: int

    def __str__(self):
        return f"{self.kind}{self.index}"

    @property
    def label(self) -> str:
        return f"{self.kind}_{self.index}"


class UnknownVertexError(KeyError):
    pass


@dataclass(frozen=True)
class TreeGraph:
    root_label: int
    internals: tuple[int, ...]  # global levels, increasing
    leaves: tuple[int, ...]  # particle indices, increasing
    children: dict  # Vertex -> tuple of child Vertex (1 for the root, 3 for internals)
    contractions: dict  # level -> (target particle, created pair)
    distinguished: bool

    @property
    def root(self) -> Vertex:
        return Vertex("W", self.root_label)

    @property
    def m(self) -> int:
        return len(self.internals)

    def vertices(self) -> list[Vertex]:
        out = [self.root]
        out += [Vertex("v", l) for l in self.internals]
        out += [Vertex("u", i) for i in self.leaves]
        return out

    def edges(self) -> list[tuple[Vertex, Vertex]]:
        return [(p, c) for p, kids in self.children.items() for c in kids]

    def local(self, alpha: int) -> Vertex:
        """Internal vertex with local (time-ordered, 1-based) label ``alpha``."""
        if not 1 <= alpha <= self.m:
            raise UnknownVertexError(f"tree W{self.root_label} has no internal vertex {alpha}")
        return Vertex("v", self.internals[alpha - 1])

    def child_order(self, vertex: Vertex) -> tuple[Vertex, Vertex, Vertex]:
        """(kappa_-, kappa, kappa_+) of an internal vertex."""
        if vertex.kind != "v" or vertex not in self.children:
            raise UnknownVertexError(str(vertex))
        return self.children[vertex]

    def subtree(self, vertex: Vertex) -> list[Vertex]:
        if vertex not in self.children and not (vertex.kind == "u" and vertex.index in self.leaves):
            raise UnknownVertexError(str(vertex))
        out, stack = [], [vertex]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self.children.get(v, ())))
        return out

    def distinguished_path(self) -> list[Vertex]:
        """Root-to-v_n path; empty for regular trees."""
        if not self.distinguished:
            return []
        last = Vertex("v", self.internals[-1])
        parent = {c: p for p, c in self.edges()}
        path = [last]
        while path[-1] != self.root:
            path.append(parent[path[-1]])
        return path[::-1]

    def shape(self, vertex: Vertex | None = None):
        """Canonical nested form, invariant under relabeling of particles/levels."""
        if vertex is None:
            vertex = self.root
        if vertex.kind == "u":
            return "u"
        rank = self.internals.index(vertex.index) + 1 if vertex.kind == "v" else 0
        return (vertex.kind, rank) + tuple(self.shape(c) for c in self.children[vertex])


def subtree_internal_count(tree: TreeGraph, vertex: Vertex) -> int:
    """Number of internal vertices in the subtree rooted at ``vertex``."""
    return sum(1 for v in tree.subtree(vertex) if v.kind == "v")


@dataclass(frozen=True)
class Forest:
    k: int
    n: int
    trees: tuple[TreeGraph, ...]
    vertex_assignment: dict  # level -> root label j

    @property
    def distinguished_index(self) -> int | None:
        for tree in self.trees:
            if tree.distinguished:
                return tree.root_label
        return None

    def tree_of(self, level: int) -> TreeGraph:
        return self.trees[self.vertex_assignment[level] - 1]


def build_forest(cmap: CollisionMap) -> Forest:
    k, n, tg = cmap.k, cmap.n, cmap.targets

    def lines(level):
        return (tg[level - 1],) + cmap.created(level)

    def next_hit(particle, after):
        return next((l for l in range(after + 1, n + 1) if tg[l - 1] == particle), None)

    children = {}
    for j in range(1, k + 1):
        first = next_hit(j, 0)
        children[Vertex("W", j)] = (Vertex("v", first) if first else Vertex("u", j),)
    for level in range(1, n + 1):
        kids = []
        for p in lines(level):
            nxt = next_hit(p, level)
            kids.append(Vertex("v", nxt) if nxt else Vertex("u", p))
        children[Vertex("v", level)] = tuple(kids)

    trees, assignment = [], {}
    for j in range(1, k + 1):
        root = Vertex("W", j)
        internals, leaves, kids = [], [], {}
        stack = [root]
        while stack:
            v = stack.pop()
            if v.kind == "u":
                leaves.append(v.index)
                continue
            kids[v] = children[v]
            if v.kind == "v":
                internals.append(v.index)
                assignment[v.index] = j
            stack.extend(children[v])
        internals.sort()
        trees.append(
            TreeGraph(
                root_label=j,
                internals=tuple(internals),
                leaves=tuple(sorted(leaves)),
                children=kids,
                contractions={l: (tg[l - 1], cmap.created(l)) for l in internals},
                distinguished=n > 0 and n in internals,
            )
        )
    return Forest(k, n, tuple(trees), assignment)


@dataclass(frozen=True)
class RelabeledKernelSpec:
    m: int
    time_labels: tuple[int, ...]
    sigma: tuple[int, ...]  # sigma[alpha-1] = sigma_j(2 alpha)
    distinguished: bool

    def sigma_at(self, r: int) -> int:
        """sigma_j(r) for even r = 2 alpha."""
        if r % 2 or not 2 <= r <= 2 * self.m:
            raise KeyError(r)
        return self.sigma[r // 2 - 1]

    def to_map(self) -> CollisionMap:
        return CollisionMap(1, self.m, self.sigma)


def relabel(tree: TreeGraph) -> RelabeledKernelSpec:
    """Renumber the tree's particle lines 1..2m+1 keeping its connectivity."""
    local = {tree.root_label: 1}
    sigma = []
    for alpha, level in enumerate(tree.internals, start=1):
        target, (p, q) = tree.contractions[level]
        sigma.append(local[target])
        local[p], local[q] = 2 * alpha, 2 * alpha + 1
    return RelabeledKernelSpec(tree.m, tree.internals, tuple(sigma), tree.distinguished)


def to_dot(forest: Forest) -> str:
    lines = ["digraph forest {", "  node [shape=circle, fontsize=10];"]
    for tree in forest.trees:
        j = tree.root_label
        lines.append(f"  subgraph cluster_tau{j} {{")
        kind = "distinguished" if tree.distinguished else "regular"
        lines.append(f'    label="tau_{j} ({kind})";')
        for v in tree.vertices():
            shape = {"W": "box", "v": "circle", "u": "point"}[v.kind]
            extra = ', xlabel="%s"' % v.label if v.kind == "u" else ""
            lines.append(f'    {v} [label="{v.label}", shape={shape}{extra}];')
        style = ' [style=bold, penwidth=2.5]' if tree.distinguished else ""
        for p, c in tree.edges():
            lines.append(f"    {p} -> {c}{style};")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def forest_summary(forest: Forest) -> list[dict]:
    """One flat record per tree (sizes, distinguished flag, relabeled map)."""
    out = []
    for tree in forest.trees:
        spec = relabel(tree)
        out.append(
            {
                "tree": f"tau_{tree.root_label}",
                "distinguished": tree.distinguished,
                "internal_count": tree.m,
                "leaf_count": len(tree.leaves),
                "internals": " ".join(f"v{l}" for l in tree.internals),
                "leaves": " ".join(f"u{i}" for i in tree.leaves),
                "sigma": " ".join(f"{2 * a}->{s}" for a, s in enumerate(spec.sigma, start=1)),
            }
        )
    return out
