import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import strategies as st

from sheafntk.sheaf import Graph


def random_graph(rng: np.random.Generator, n: int, p: float = 0.5, connected: bool = False) -> Graph:
    while True:
        edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
        g = Graph(n, tuple(edges))
        if not connected or g.is_connected():
            return g


def from_nx(g: nx.Graph) -> Graph:
    g = nx.convert_node_labels_to_integers(g)
    return Graph(g.number_of_nodes(), tuple(g.edges()))


def path(n):
    return Graph(n, tuple((i, i + 1) for i in range(n - 1)))


def cycle(n):
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def complete(n):
    return Graph(n, tuple(itertools.combinations(range(n), 2)))


K2 = Graph(2, ((0, 1),))
K22 = Graph(4, ((0, 2), (0, 3), (1, 2), (1, 3)))
PAW = Graph(4, ((0, 1), (1, 2), (0, 2), (2, 3)))
BRIDGED_TRIANGLES = Graph(6, ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)))


@st.composite
def graphs(draw, min_nodes=2, max_nodes=7):
    n = draw(st.integers(min_nodes, max_nodes))
    pairs = list(itertools.combinations(range(n), 2))
    mask = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph(n, tuple(p for p, keep in zip(pairs, mask) if keep))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def graph_corpus() -> list[Graph]:
    """Connected graphs on 2..10 nodes: the full atlas up to 5 nodes plus named larger ones."""
    out = [from_nx(g) for g in nx.graph_atlas_g()[1:]
           if 2 <= g.number_of_nodes() <= 5 and nx.is_connected(g)]
    named = [
        nx.petersen_graph(), nx.cycle_graph(8), nx.path_graph(9), nx.barbell_graph(4, 1),
        nx.wheel_graph(7), nx.complete_bipartite_graph(3, 4), nx.ladder_graph(5),
        nx.circular_ladder_graph(4), nx.star_graph(6), nx.lollipop_graph(5, 3),
        nx.hypercube_graph(3), nx.complete_graph(6), nx.krackhardt_kite_graph(),
    ]
    out += [from_nx(g) for g in named]
    out.append(BRIDGED_TRIANGLES)
    return out


def brute_cheeger(g: Graph) -> tuple[float, float]:
    """Edge expansion and conductance by plain enumeration of every proper subset."""
    n = g.num_nodes
    deg = g.degrees()
    vol = deg.sum()
    best_h = best_phi = math.inf
    for r in range(1, n):
        for S in itertools.combinations(range(n), r):
            s = set(S)
            cut = sum((u in s) != (v in s) for u, v in g.edges)
            vs = sum(deg[v] for v in S)
            best_h = min(best_h, cut / min(r, n - r))
            best_phi = min(best_phi, cut / min(vs, vol - vs))
    return best_h, best_phi


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
