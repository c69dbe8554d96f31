"""Star spanning trees and their perturbed edge-list generalization.

A star over N nodes connects one center to all N-1 leaves, giving a
spanning tree of the complete graph with diameter 2 and sparsity 1 - 2/N.
The perturbation procedure detaches a fraction p of the leaves and rewires
each one to a leaf that kept its center edge, holding the edge count (and
hence sparsity) constant.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VIRTUAL",
    "EdgeList",
    "StarGraph",
    "build_star",
    "diameter",
    "is_spanning_tree",
    "perturb_star",
    "star_sparsity",
]


class _Virtual:
    """Marker for a synthesized center embedding that is not a graph node."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "VIRTUAL"


VIRTUAL = _Virtual()


@dataclass(frozen=True)
class StarGraph:
    """Star topology: one center joined to every other node.

    ``center`` is either a node index or VIRTUAL (center embedding is
    synthesized and the graph has no explicit center node).
    """

    n: int
    center: int | _Virtual = 0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"star needs n >= 2, got {self.n}")
        if self.center is not VIRTUAL and not 0 <= self.center < self.n:
            raise ValueError(f"center {self.center} out of range [0, {self.n})")

    @property
    def leaves(self) -> list[int]:
        if self.center is VIRTUAL:
            raise ValueError("virtual-center star has no explicit leaf set")
        return [v for v in range(self.n) if v != self.center]

    def edge_list(self) -> "EdgeList":
        if self.center is VIRTUAL:
            raise ValueError("virtual-center star has no explicit edges")
        return EdgeList(self.n, frozenset(_norm(self.center, v) for v in self.leaves))


def _norm(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class EdgeList:
    """Undirected simple graph as a set of normalized node pairs."""

    n: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop ({u},{v}) not allowed")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u},{v}) outside [0, {self.n})")
            if u > v:
                raise ValueError(f"edge ({u},{v}) not normalized")

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v"])
            for u, v in sorted(self.edges):
                w.writerow([u, v])

    @classmethod
    def read_csv(cls, path, n: int) -> "EdgeList":
        edges = set()
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            if header != ["u", "v"]:
                raise ValueError(f"expected header 'u,v', got {header}")
            for row in r:
                u, v = int(row[0]), int(row[1])
                edges.add(_norm(u, v))
        return cls(n, frozenset(edges))


def build_star(n: int, center: int = 0) -> StarGraph:
    """Star spanning tree of the complete graph on n nodes."""
    if n < 2:
        raise ValueError(f"build_star: n must be >= 2, got {n}")
    if not 0 <= center < n:
        raise ValueError(f"build_star: center {center} out of range [0, {n})")
    return StarGraph(n, center)


def star_sparsity(n: int) -> float:
    """Edge sparsity 1 - 2/n of an n-node star relative to the complete graph."""
    if n < 2:
        raise ValueError(f"star_sparsity: n must be >= 2, got {n}")
    return 1.0 - 2.0 / n


def _bfs_ecc(adj: list[list[int]], src: int) -> tuple[int, int, int]:
    """Return (eccentricity, farthest node, visited count) from src."""
    dist = {src: 0}
    q = deque([src])
    far, ecc = src, 0
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                if dist[v] > ecc:
                    ecc, far = dist[v], v
                q.append(v)
    return ecc, far, len(dist)


def diameter(g: EdgeList) -> int | float:
    """Exact diameter; math.inf when disconnected.

    Trees get the classic two-sweep BFS (exact for trees); everything else
    falls back to all-pairs BFS.
    """
    if g.n < 1:
        raise ValueError("diameter: graph needs at least one node")
    if g.n == 1:
        return 0
    adj = g.adjacency()
    ecc0, far, seen = _bfs_ecc(adj, 0)
    if seen < g.n:
        return math.inf
    if len(g.edges) == g.n - 1:  # connected with n-1 edges: a tree
        ecc1, _, _ = _bfs_ecc(adj, far)
        return ecc1
    best = ecc0
    for src in range(1, g.n):
        ecc, _, _ = _bfs_ecc(adj, src)
        best = max(best, ecc)
    return best


def is_spanning_tree(g: EdgeList) -> bool:
    """True iff g is connected and has exactly n-1 edges."""
    if g.n == 0 or len(g.edges) != g.n - 1:
        return False
    _, _, seen = _bfs_ecc(g.adjacency(), 0)
    return seen == g.n


def perturb_star(g: StarGraph, p: float, seed: int) -> EdgeList:
    """Detach round(p*(n-1)) leaves and rewire each to a still-attached leaf.

    M center-leaf edges are removed uniformly without replacement, then each
    detached leaf is joined to a uniformly chosen leaf that kept its center
    edge (never to the center itself). The edge count stays n-1, so graph
    sparsity is unchanged. Deterministic for a given seed (PCG64).
    """
    if g.center is VIRTUAL:
        raise ValueError("perturb_star: center must be a real node")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"perturb_star: p must be in [0, 1], got {p}")
    n = g.n
    leaves = g.leaves
    m = int(math.floor(p * (n - 1) + 0.5))  # round half-up
    if m == n - 1:
        raise ValueError("perturb_star: perturbation would detach every leaf")
    rng = np.random.default_rng(seed)
    detached = set(int(x) for x in rng.choice(leaves, size=m, replace=False)) if m else set()
    attached = [v for v in leaves if v not in detached]
    edges = {_norm(g.center, v) for v in attached}
    for leaf in sorted(detached):
        e = _norm(leaf, int(attached[rng.integers(len(attached))]))
        while e in edges:  # cannot recur for stars, kept as a guard
            e = _norm(leaf, int(attached[rng.integers(len(attached))]))
        edges.add(e)
    return EdgeList(n, frozenset(edges))
