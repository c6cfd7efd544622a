"""Directed graphs, incidence decomposition and Laplacians.

Edges are ``(head, tail)`` pairs of 1-based vertex labels. The head is the
origin of the edge and carries the +1 entry of the incidence matrix; the
tail carries -1. With this convention ``E = B_o + B_i`` where ``B_o`` holds
the +1 (head) entries and ``B_i`` the -1 (tail) entries, and

    L   = E E^T      (Laplacian of the undirected counterpart)
    L_o = B_o E^T    (out-Laplacian, out-degrees on the diagonal)
    L_i = B_i E^T    (in-Laplacian)
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .linalg import symmetric_eigh

__all__ = [
    "Digraph",
    "GraphError",
    "IncidenceSet",
    "SpectralSummary",
    "fiedler_vector",
    "has_globally_reachable_node",
    "incidence_matrices",
    "is_balanced",
    "is_weakly_connected",
    "laplacians",
    "max_out_degree",
    "out_degrees",
    "relabel",
    "undirected_spectrum",
]


class GraphError(ValueError):
    """Raised for structurally invalid digraphs."""


@dataclass(frozen=True)
class Digraph:
    """Simple digraph on vertices ``1..vertex_count``.

    ``edges`` keeps declaration order; column ``k`` of every incidence
    matrix corresponds to ``edges[k]``.
    """

    vertex_count: int
    edges: tuple = ()

    def __post_init__(self):
        n = self.vertex_count
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise GraphError(f"vertex_count must be a positive integer, got {n!r}")
        edges = tuple((int(h), int(t)) for h, t in self.edges)
        seen = set()
        for k, (h, t) in enumerate(edges):
            if not (1 <= h <= n and 1 <= t <= n):
                raise GraphError(f"edge {k} ({h}->{t}) has a vertex outside 1..{n}")
            if h == t:
                raise GraphError(f"edge {k} is a self-loop on vertex {h}")
            if (h, t) in seen:
                raise GraphError(f"edge {k} ({h}->{t}) is a duplicate")
            seen.add((h, t))
        object.__setattr__(self, "vertex_count", int(n))
        object.__setattr__(self, "edges", edges)

    @property
    def edge_count(self):
        return len(self.edges)


@dataclass(frozen=True)
class IncidenceSet:
    E: np.ndarray
    B_o: np.ndarray
    B_i: np.ndarray


@dataclass(frozen=True)
class SpectralSummary:
    """Spectrum of ``L = E E^T``; ``lambda_max`` is the largest eigenvalue."""

    lambda2: float
    lambda_max: float
    eigenvalues: np.ndarray


def incidence_matrices(g):
    n, m = g.vertex_count, g.edge_count
    B_o = np.zeros((n, m))
    B_i = np.zeros((n, m))
    for k, (h, t) in enumerate(g.edges):
        B_o[h - 1, k] = 1.0
        B_i[t - 1, k] = -1.0
    return IncidenceSet(E=B_o + B_i, B_o=B_o, B_i=B_i)


def laplacians(g):
    """Return ``(L, L_i, L_o)``.

    ``L`` is symmetric positive semi-definite and ``L = L_i + L_o``; both
    ``L`` and ``L_o`` annihilate the all-ones vector.
    """
    inc = incidence_matrices(g)
    L = inc.E @ inc.E.T
    L_i = inc.B_i @ inc.E.T
    L_o = inc.B_o @ inc.E.T
    return L, L_i, L_o


def out_degrees(g):
    deg = np.zeros(g.vertex_count, dtype=int)
    for h, _ in g.edges:
        deg[h - 1] += 1
    return deg


def max_out_degree(g):
    return int(out_degrees(g).max()) if g.edge_count else 0


def _predecessors(g):
    pred = [[] for _ in range(g.vertex_count)]
    for h, t in g.edges:
        pred[t - 1].append(h - 1)
    return pred


def has_globally_reachable_node(g):
    """True iff some vertex can be reached from every vertex along directed paths.

    Runs one backward breadth-first search per candidate vertex.
    """
    pred = _predecessors(g)
    n = g.vertex_count
    for root in range(n):
        seen = [False] * n
        seen[root] = True
        queue = deque([root])
        count = 1
        while queue:
            v = queue.popleft()
            for p in pred[v]:
                if not seen[p]:
                    seen[p] = True
                    count += 1
                    queue.append(p)
        if count == n:
            return True
    return False


def is_weakly_connected(g):
    """Connectivity of the undirected counterpart."""
    n = g.vertex_count
    adj = [[] for _ in range(n)]
    for h, t in g.edges:
        adj[h - 1].append(t - 1)
        adj[t - 1].append(h - 1)
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n


def is_balanced(g):
    indeg = np.zeros(g.vertex_count, dtype=int)
    for _, t in g.edges:
        indeg[t - 1] += 1
    return bool(np.array_equal(indeg, out_degrees(g)))


def undirected_spectrum(g):
    """Sorted spectrum of ``L(G) = E E^T`` with its second and largest eigenvalues.

    The smallest eigenvalue is zero analytically; roundoff of order 1e-15
    is clipped so the reported spectrum is non-negative.
    """
    L, _, _ = laplacians(g)
    w, _ = symmetric_eigh(L)
    w = np.where(np.abs(w) < 1e-12, 0.0, w)
    lambda2 = float(w[1]) if w.size > 1 else 0.0
    return SpectralSummary(lambda2=lambda2, lambda_max=float(w[-1]), eigenvalues=w)


def fiedler_vector(g):
    """Unit eigenvector of ``L(G)`` paired with ``lambda2``."""
    L, _, _ = laplacians(g)
    _, v = symmetric_eigh(L)
    if g.vertex_count < 2:
        raise GraphError("a Fiedler vector needs at least two vertices")
    return v[:, 1]


def relabel(g, permutation):
    """Copy of ``g`` with vertex ``i`` renamed ``permutation[i - 1]``.

    ``permutation`` is a sequence of 1-based labels.
    """
    perm = [int(p) for p in permutation]
    if sorted(perm) != list(range(1, g.vertex_count + 1)):
        raise GraphError("permutation must list every vertex label exactly once")
    return Digraph(g.vertex_count, tuple((perm[h - 1], perm[t - 1]) for h, t in g.edges))
