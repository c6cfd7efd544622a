import numpy as np
import pytest
from hypothesis import strategies as st

from netagree.graph import Digraph, has_globally_reachable_node
from netagree.interconnect import assemble
from netagree.systems import builtin_agent, builtin_controller

# Five-node benchmark from the heterogeneous case study.
DENSE_EDGES = ((1, 2), (2, 3), (4, 3), (5, 4), (2, 5), (3, 1), (4, 1), (5, 1))
# Five-node tree that still reaches consensus without a certificate.
TREE_EDGES = ((3, 2), (2, 1), (5, 4), (4, 1))
HETERO_KINDS = ("integrator", "integrator", "integrator_tanh", "integrator_tanh", "integrator_saturation")
HETERO_X0 = np.array([0.23, -0.2, 1.0, -2.4, 0.0])


@pytest.fixture
def dense_graph():
    return Digraph(5, DENSE_EDGES)


@pytest.fixture
def tree_graph():
    return Digraph(5, TREE_EDGES)


def hetero_network(edges, gain=2.0):
    g = Digraph(5, edges)
    agents = [builtin_agent(k) for k in HETERO_KINDS]
    controllers = [builtin_controller("static_gain", gain=gain) for _ in edges]
    return assemble(agents, controllers, g)


def linear_network(g, gain=1.0):
    agents = [builtin_agent("integrator") for _ in range(g.vertex_count)]
    controllers = [builtin_controller("static_gain", gain=gain) for _ in g.edges]
    return assemble(agents, controllers, g)


@st.composite
def digraphs(draw, min_nodes=2, max_nodes=10, max_edges=None):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = [(h, t) for h in range(1, n + 1) for t in range(1, n + 1) if h != t]
    cap = len(pairs) if max_edges is None else min(max_edges, len(pairs))
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=cap, unique=True))
    return Digraph(n, tuple(chosen))


def random_reachable_digraph(rng, n):
    """Random digraph on ``n`` nodes with a globally reachable node."""
    while True:
        # a spanning in-tree rooted at a random node guarantees reachability
        order = rng.permutation(n) + 1
        edges = {(int(order[k]), int(order[rng.integers(0, k)])) for k in range(1, n)}
        extra = rng.integers(0, n * (n - 1) // 2 + 1)
        for _ in range(extra):
            h, t = rng.choice(n, size=2, replace=False) + 1
            edges.add((int(h), int(t)))
        g = Digraph(n, tuple(sorted(edges)))
        if has_globally_reachable_node(g):
            return g


def random_balanced_digraph(rng, n):
    """Union of edge-disjoint directed cycles: every in-degree equals its out-degree."""
    edges = set()
    order = [int(v) for v in rng.permutation(n) + 1]
    for a, b in zip(order, order[1:] + order[:1]):
        edges.add((a, b))
    for _ in range(rng.integers(0, 3)):
        k = int(rng.integers(2, n + 1))
        cyc = [int(v) for v in rng.choice(n, size=k, replace=False) + 1]
        ring = list(zip(cyc, cyc[1:] + cyc[:1]))
        if not any(e in edges for e in ring):
            edges.update(ring)
    return Digraph(n, tuple(sorted(edges)))
