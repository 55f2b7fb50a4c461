"""Directed and undirected graphs, moralization, triangulation and clique sequences.

Nodes are addressed by 0-based index internally and by name at I/O
boundaries.  The hot paths (moral graph, min-fill triangulation and
maximum cardinality search) operate on adjacency bitmasks, one Python int
per node, so that structure search can recompute decompositions cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CycleError, DimensionMismatch, NotDecomposable

__all__ = [
    "Dag",
    "UGraph",
    "CliqueSequence",
    "moralize",
    "triangulate",
    "clique_sequence",
    "decomposable_cover",
    "is_chordal",
    "read_adjacency_list",
    "write_adjacency_list",
    "format_adjacency_list",
    "to_dot",
]


# ---------------------------------------------------------------------------
# bitmask helpers


def bits(mask: int) -> list[int]:
    """Indices of the set bits of ``mask`` in ascending order."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def mask_of(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


def _default_names(p: int) -> tuple[str, ...]:
    return tuple(f"X{i + 1}" for i in range(p))


def topological_order_masks(parents: Sequence[int]) -> list[int] | None:
    """Kahn's algorithm over parent masks; ``None`` when a cycle exists.

    Ties are broken by lowest index so the order is deterministic.
    """
    p = len(parents)
    children = [0] * p
    indeg = [0] * p
    for k, pm in enumerate(parents):
        indeg[k] = pm.bit_count()
        for j in bits(pm):
            children[j] |= 1 << k
    ready = [k for k in range(p) if indeg[k] == 0]
    order = []
    while ready:
        ready.sort()
        k = ready.pop(0)
        order.append(k)
        for c in bits(children[k]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    if len(order) != p:
        return None
    return order


def moral_masks(parents: Sequence[int]) -> list[int]:
    """Adjacency masks of the moral graph of the DAG given by ``parents``."""
    p = len(parents)
    adj = [0] * p
    for k in range(p):
        pm = parents[k]
        if not pm:
            continue
        adj[k] |= pm
        for q in bits(pm):
            adj[q] |= (1 << k) | (pm & ~(1 << q))
    return adj


def _fill_pairs(nb: int, work: list[int]) -> list[tuple[int, int]]:
    pairs = []
    for u in bits(nb):
        for w in bits(nb & ~work[u] & ~((2 << u) - 1)):
            pairs.append((u, w))
    return pairs


def min_fill_masks(adj: Sequence[int]) -> list[int]:
    """Min-fill elimination; returns the adjacency masks of the filled graph.

    The vertex eliminated next has the fewest fill edges.  Ties go to the
    vertex whose sorted fill-edge list is lexicographically smallest, then
    to the lowest index.
    """
    p = len(adj)
    work = list(adj)
    out = list(adj)
    remaining = (1 << p) - 1
    for _ in range(p):
        best_v = -1
        best_fill = None
        best_pairs = None
        for v in bits(remaining):
            nb = work[v] & remaining
            missing = 0
            for u in bits(nb):
                missing += (nb & ~work[u]).bit_count() - 1
            fill = missing // 2
            if best_fill is None or fill < best_fill:
                best_v, best_fill, best_pairs = v, fill, None
                if fill == 0:
                    break
            elif fill == best_fill:
                if best_pairs is None:
                    best_pairs = _fill_pairs(work[best_v] & remaining, work)
                pairs = _fill_pairs(nb, work)
                if pairs < best_pairs:
                    best_v, best_pairs = v, pairs
        v = best_v
        nb = work[v] & remaining
        if best_fill:
            for u in bits(nb):
                extra = nb & ~(1 << u)
                work[u] |= extra
                out[u] |= extra
        remaining &= ~(1 << v)
    return out


def mcs_order(adj: Sequence[int]) -> list[int]:
    """Maximum cardinality search visit order (lowest index breaks ties)."""
    p = len(adj)
    weight = [0] * p
    numbered = 0
    order = []
    for _ in range(p):
        best, bw = -1, -1
        for v in range(p):
            if not (numbered >> v) & 1 and weight[v] > bw:
                best, bw = v, weight[v]
        order.append(best)
        numbered |= 1 << best
        for u in bits(adj[best] & ~numbered):
            weight[u] += 1
    return order


def clique_masks(adj: Sequence[int]) -> list[int]:
    """Cliques of a chordal graph in a running-intersection order.

    Raises NotDecomposable if the MCS order is not a perfect elimination
    ordering.
    """
    order = mcs_order(adj)
    numbered = 0
    pre = []
    for v in order:
        pv = adj[v] & numbered
        for u in bits(pv):
            if pv & ~(1 << u) & ~adj[u]:
                raise NotDecomposable("graph is not chordal")
        pre.append(pv)
        numbered |= 1 << v
    cliques = []
    n = len(order)
    for i, v in enumerate(order):
        size = pre[i].bit_count()
        if i + 1 == n or pre[i + 1].bit_count() <= size:
            cliques.append(pre[i] | (1 << v))
    return cliques


def separator_masks(cliques: Sequence[int]) -> list[int]:
    seps = []
    hist = 0
    for j, c in enumerate(cliques):
        if j:
            seps.append(hist & c)
        hist |= c
    return seps


def cover_masks(parents: Sequence[int]) -> tuple[list[int], list[int]]:
    """Cliques and separators of the triangulated moral graph."""
    cl = clique_masks(min_fill_masks(moral_masks(parents)))
    return cl, separator_masks(cl)


# ---------------------------------------------------------------------------
# graph types


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over named nodes.

    ``edges`` holds ordered index pairs ``(src, dst)``.  Construction
    validates indices, self-loops and acyclicity; the edit methods return
    new instances.
    """

    node_names: tuple[str, ...]
    edges: frozenset[tuple[int, int]] = frozenset()
    _parents: tuple[int, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.node_names)
        object.__setattr__(self, "node_names", names)
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        p = len(names)
        if len(set(names)) != p:
            raise ValueError("duplicate node names")
        parents = [0] * p
        for a, b in edges:
            if not (0 <= a < p and 0 <= b < p):
                raise IndexError(f"edge {(a, b)} out of range for {p} nodes")
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            parents[b] |= 1 << a
        if topological_order_masks(parents) is None:
            raise CycleError("edge set contains a directed cycle")
        object.__setattr__(self, "_parents", tuple(parents))

    @classmethod
    def empty(cls, nodes: int | Sequence[str]) -> "Dag":
        names = _default_names(nodes) if isinstance(nodes, int) else tuple(nodes)
        return cls(names, frozenset())

    @classmethod
    def from_parent_masks(cls, node_names: Sequence[str], parents: Sequence[int]) -> "Dag":
        edges = frozenset((j, k) for k, pm in enumerate(parents) for j in bits(pm))
        return cls(tuple(node_names), edges)

    @classmethod
    def from_adjacency(cls, a, node_names: Sequence[str] | None = None) -> "Dag":
        a = np.asarray(a)
        p = a.shape[0]
        names = _default_names(p) if node_names is None else tuple(node_names)
        edges = frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(a)))
        return cls(names, edges)

    @property
    def p(self) -> int:
        return len(self.node_names)

    @property
    def parent_masks(self) -> tuple[int, ...]:
        return self._parents

    def parents(self, k: int) -> list[int]:
        return bits(self._parents[k])

    def children(self, k: int) -> list[int]:
        return sorted(b for a, b in self.edges if a == k)

    def topological_order(self) -> list[int]:
        return topological_order_masks(self._parents)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=int)
        for i, j in self.edges:
            a[i, j] = 1
        return a

    def add_edge(self, i: int, j: int) -> "Dag":
        return Dag(self.node_names, self.edges | {(i, j)})

    def remove_edge(self, i: int, j: int) -> "Dag":
        if (i, j) not in self.edges:
            raise KeyError((i, j))
        return Dag(self.node_names, self.edges - {(i, j)})

    def reverse_edge(self, i: int, j: int) -> "Dag":
        if (i, j) not in self.edges:
            raise KeyError((i, j))
        return Dag(self.node_names, (self.edges - {(i, j)}) | {(j, i)})

    def skeleton(self) -> "UGraph":
        return UGraph(self.node_names, self.edges)

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


@dataclass(frozen=True)
class UGraph:
    """Undirected simple graph; edges are stored as ``(min, max)`` pairs."""

    node_names: tuple[str, ...]
    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        names = tuple(self.node_names)
        object.__setattr__(self, "node_names", names)
        p = len(names)
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if not (0 <= a < p and 0 <= b < p):
                raise IndexError(f"edge {(a, b)} out of range for {p} nodes")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_masks(cls, node_names: Sequence[str], adj: Sequence[int]) -> "UGraph":
        edges = frozenset((i, j) for i, m in enumerate(adj) for j in bits(m) if i < j)
        return cls(tuple(node_names), edges)

    @property
    def p(self) -> int:
        return len(self.node_names)

    def masks(self) -> list[int]:
        adj = [0] * self.p
        for a, b in self.edges:
            adj[a] |= 1 << b
            adj[b] |= 1 << a
        return adj

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def neighbors(self, k: int) -> list[int]:
        return bits(self.masks()[k])

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=int)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1
        return a


@dataclass(frozen=True)
class CliqueSequence:
    """Ordered cliques with their separators and histories.

    ``separators[j - 1]`` belongs to ``cliques[j]``; it is empty when the
    clique starts a new connected component.
    """

    cliques: tuple[frozenset[int], ...]
    separators: tuple[frozenset[int], ...]
    histories: tuple[frozenset[int], ...]

    @classmethod
    def from_masks(cls, cliques: Sequence[int]) -> "CliqueSequence":
        cl = tuple(frozenset(bits(c)) for c in cliques)
        seps = tuple(frozenset(bits(s)) for s in separator_masks(cliques))
        hist = []
        h = frozenset()
        for c in cl:
            h = h | c
            hist.append(h)
        return cls(cl, seps, tuple(hist))

    def nonempty_separators(self) -> list[frozenset[int]]:
        return [s for s in self.separators if s]


def moralize(dag: Dag) -> UGraph:
    """Marry co-parents and drop directions."""
    return UGraph.from_masks(dag.node_names, moral_masks(dag.parent_masks))


def triangulate(g: UGraph) -> UGraph:
    """Chordal supergraph of ``g`` by min-fill elimination."""
    return UGraph.from_masks(g.node_names, min_fill_masks(g.masks()))


def is_chordal(g: UGraph) -> bool:
    try:
        clique_masks(g.masks())
    except NotDecomposable:
        return False
    return True


def clique_sequence(g: UGraph) -> CliqueSequence:
    """Clique/separator/history sequence of a chordal graph."""
    return CliqueSequence.from_masks(clique_masks(g.masks()))


def decomposable_cover(dag: Dag) -> CliqueSequence:
    """Clique sequence of the triangulated moral graph of ``dag``."""
    return clique_sequence(triangulate(moralize(dag)))


# ---------------------------------------------------------------------------
# I/O


def format_adjacency_list(g: Dag | UGraph) -> str:
    arrow = "->" if isinstance(g, Dag) else "--"
    lines = list(g.node_names)
    for a, b in sorted(g.edges):
        lines.append(f"{g.node_names[a]} {arrow} {g.node_names[b]}")
    return "\n".join(lines) + "\n"


def parse_adjacency_list(text: str, directed: bool = True) -> Dag | UGraph:
    """Parse ``src -> dst`` lines (``--`` for undirected); a bare name declares a node.

    Node order of first appearance defines the index order.  ``#`` starts a
    comment.
    """
    names: list[str] = []
    index: dict[str, int] = {}
    edges = []

    def idx(name):
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("->", "--"):
            if sep in line:
                a, b = (s.strip() for s in line.split(sep, 1))
                if not a or not b:
                    raise ValueError(f"malformed edge line: {raw!r}")
                edges.append((idx(a), idx(b)))
                break
        else:
            idx(line)
    cls = Dag if directed else UGraph
    return cls(tuple(names), frozenset(edges))


def read_adjacency_list(path: str | Path, directed: bool = True) -> Dag | UGraph:
    return parse_adjacency_list(Path(path).read_text(encoding="utf-8"), directed)


def write_adjacency_list(g: Dag | UGraph, path: str | Path) -> None:
    Path(path).write_text(format_adjacency_list(g), encoding="utf-8")


def to_dot(g: Dag | UGraph, name: str = "G") -> str:
    directed = isinstance(g, Dag)
    kw, arrow = ("digraph", "->") if directed else ("graph", "--")
    lines = [f"{kw} {name} {{"]
    for n in g.node_names:
        lines.append(f'  "{n}";')
    for a, b in sorted(g.edges):
        lines.append(f'  "{g.node_names[a]}" {arrow} "{g.node_names[b]}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def reorder(g: Dag | UGraph, node_names: Sequence[str]) -> Dag | UGraph:
    """Same graph with nodes re-indexed to follow ``node_names``."""
    names = tuple(node_names)
    if sorted(names) != sorted(g.node_names) or len(set(names)) != len(names):
        raise DimensionMismatch(f"node names {sorted(g.node_names)} do not match {sorted(names)}")
    pos = {n: i for i, n in enumerate(names)}
    new = [pos[n] for n in g.node_names]
    edges = frozenset((new[a], new[b]) for a, b in g.edges)
    if isinstance(g, UGraph):
        edges = frozenset((min(a, b), max(a, b)) for a, b in edges)
    return type(g)(names, edges)


def check_same_nodes(a, b) -> None:
    if a.p != b.p:
        raise DimensionMismatch(f"graphs have {a.p} and {b.p} nodes")
