"""Directed communication topologies and broadcast weight assignment.

Nodes are numbered 1..n.  An edge ``(src, dst)`` means *src transmits to
dst*; every node additionally hears itself through an implicit self-loop,
which is why self-loop entries are rejected in edge lists.  Each node
splits its state evenly over its out-neighbours and itself, so the weight
matrix built here is column-stochastic by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GraphFormatError(ValueError):
    """Raised when an edge-list document cannot be parsed."""


@dataclass(frozen=True)
class Digraph:
    """Immutable directed graph with 1-based node ids and no self-loops.

    ``edges`` is kept sorted; that order is the canonical link order used
    everywhere else (RNG stream assignment, trace bookkeeping), so two
    Digraphs built from the same edge set behave identically.
    """

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        seen = set()
        for src, dst in self.edges:
            if not (1 <= src <= self.n and 1 <= dst <= self.n):
                raise ValueError(f"edge ({src}, {dst}) out of range 1..{self.n}")
            if src == dst:
                raise ValueError(f"explicit self-loop ({src}, {dst}) not allowed")
            if (src, dst) in seen:
                raise ValueError(f"duplicate edge ({src}, {dst})")
            seen.add((src, dst))
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))

    @property
    def m(self) -> int:
        """Number of non-self directed edges."""
        return len(self.edges)

    def out_neighbors(self, j: int) -> list[int]:
        return [dst for src, dst in self.edges if src == j]

    def in_neighbors(self, j: int) -> list[int]:
        return [src for src, dst in self.edges if dst == j]

    def out_degree(self, j: int) -> int:
        return len(self.out_neighbors(j))

    def in_degree(self, j: int) -> int:
        return len(self.in_neighbors(j))


def parse_graph(text: str) -> Digraph:
    """Parse an edge-list document: a header line ``n <count>`` followed by
    ``src dst`` lines (one directed edge each, src transmits to dst)."""
    n = None
    edges = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if n is None:
            if len(tokens) != 2 or tokens[0] != "n":
                raise GraphFormatError(f"line {lineno}: expected header 'n <count>', got {raw!r}")
            try:
                n = int(tokens[1])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: node count {tokens[1]!r} is not an integer") from None
            if n < 1:
                raise GraphFormatError(f"line {lineno}: node count must be positive")
            continue
        if len(tokens) != 2:
            raise GraphFormatError(f"line {lineno}: expected 'src dst', got {raw!r}")
        try:
            src, dst = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer endpoint in {raw!r}") from None
        if not (1 <= src <= n and 1 <= dst <= n):
            raise GraphFormatError(f"line {lineno}: edge ({src}, {dst}) out of range 1..{n}")
        if src == dst:
            raise GraphFormatError(f"line {lineno}: explicit self-loop ({src}, {dst})")
        if (src, dst) in seen:
            raise GraphFormatError(f"line {lineno}: duplicate edge ({src}, {dst})")
        seen.add((src, dst))
        edges.append((src, dst))
    if n is None:
        raise GraphFormatError("empty document: missing 'n <count>' header")
    return Digraph(n=n, edges=tuple(edges))


def serialize_graph(g: Digraph) -> str:
    """Inverse of parse_graph (parse ∘ serialize is the identity)."""
    lines = [f"n {g.n}"] + [f"{src} {dst}" for src, dst in g.edges]
    return "\n".join(lines) + "\n"


def assign_weights(g: Digraph) -> np.ndarray:
    """Column-stochastic weights: column j holds 1/(1 + out-degree of j) on
    the rows of j itself and of every out-neighbour of j, zero elsewhere."""
    p = np.zeros((g.n, g.n))
    for j in range(1, g.n + 1):
        w = 1.0 / (1 + g.out_degree(j))
        p[j - 1, j - 1] = w
        for dst in g.out_neighbors(j):
            p[dst - 1, j - 1] = w
    return p


def is_strongly_connected(g: Digraph) -> bool:
    """True iff every node reaches every other along directed edges."""
    if g.n == 1:
        return True
    fwd = {j: [] for j in range(1, g.n + 1)}
    rev = {j: [] for j in range(1, g.n + 1)}
    for src, dst in g.edges:
        fwd[src].append(dst)
        rev[dst].append(src)

    def reaches_all(adj):
        seen = {1}
        stack = [1]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == g.n

    return reaches_all(fwd) and reaches_all(rev)


# Built-in topologies used throughout the experiments: a 5-node and a
# 10-node strongly connected digraph.
_PAPER5_EDGES = ((1, 2), (1, 3), (2, 3), (2, 5), (3, 5), (4, 1), (5, 3), (5, 4))
_PAPER10_EDGES = (
    (1, 2), (1, 4),
    (2, 1),
    (3, 2), (3, 7),
    (4, 5), (4, 8),
    (5, 4), (5, 6),
    (6, 7),
    (7, 3), (7, 6),
    (8, 4), (8, 9),
    (9, 10),
    (10, 7), (10, 9),
)

GRAPH_REGISTRY = {
    "paper5": Digraph(5, _PAPER5_EDGES),
    "paper10": Digraph(10, _PAPER10_EDGES),
}


def named_graph(name: str) -> Digraph:
    try:
        return GRAPH_REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown graph {name!r}; known: {sorted(GRAPH_REGISTRY)}") from None
