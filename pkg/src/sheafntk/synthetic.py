"""Small synthetic graphs used by the fixtures and the experiment scripts."""
from __future__ import annotations

import networkx as nx
import numpy as np

from .sheaf import Graph


def two_block_sbm(block_size: int, p_in: float, p_out: float, seed: int) -> tuple[Graph, np.ndarray]:
    """Two equal blocks; labels are +1 on the first block and -1 on the second."""
    g = nx.stochastic_block_model([block_size, block_size], [[p_in, p_out], [p_out, p_in]], seed=seed)
    labels = np.repeat([1.0, -1.0], block_size)
    return Graph(2 * block_size, tuple(g.edges())), labels


def bridged_triangles() -> Graph:
    return Graph(6, ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)))


def barbell(clique: int, path_len: int) -> Graph:
    g = nx.barbell_graph(clique, path_len)
    return Graph(g.number_of_nodes(), tuple(g.edges()))


def from_networkx(g: nx.Graph) -> Graph:
    g = nx.convert_node_labels_to_integers(g)
    return Graph(g.number_of_nodes(), tuple(g.edges()))
