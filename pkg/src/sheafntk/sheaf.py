"""Cellular sheaves on undirected graphs and their diffusion operators.

Everything here is dense numpy. A signal on a sheaf with stalk dimension ``k``
over ``N`` nodes is an ``(N*k, d)`` array whose rows come in ``N`` contiguous
blocks of ``k``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from .errors import (
    AlphaOutOfRange,
    InvalidGraph,
    InvalidSheaf,
    ShapeMismatch,
    SingularDegreeBlock,
)

EIG_FLOOR = 1e-12
RANK_RTOL = 1e-9

DiffusionKind = Literal["normalized", "alpha_scaled"]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph. Edges are stored oriented ``min -> max``."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if int(self.num_nodes) < 1:
            raise InvalidGraph(f"num_nodes must be positive, got {self.num_nodes}")
        canon = []
        seen = set()
        for e in self.edges:
            u, v = (int(x) for x in e)
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise InvalidGraph(f"edge ({u}, {v}) out of range for {self.num_nodes} nodes")
            if u == v:
                raise InvalidGraph(f"self-loop at node {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise InvalidGraph(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        object.__setattr__(self, "num_nodes", int(self.num_nodes))
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.num_nodes, self.num_nodes))
        for u, v in self.edges:
            A[u, v] = A[v, u] = 1.0
        return A

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return nbrs

    def is_connected(self) -> bool:
        nbrs = self.neighbors()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for w in nbrs[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == self.num_nodes

    def two_coloring(self) -> Optional[np.ndarray]:
        """Return a 0/1 coloring if the graph is bipartite, else ``None``."""
        nbrs = self.neighbors()
        color = -np.ones(self.num_nodes, dtype=int)
        for start in range(self.num_nodes):
            if color[start] >= 0:
                continue
            color[start] = 0
            queue = deque([start])
            while queue:
                u = queue.popleft()
                for w in nbrs[u]:
                    if color[w] < 0:
                        color[w] = 1 - color[u]
                        queue.append(w)
                    elif color[w] == color[u]:
                        return None
        return color

    def is_bipartite(self) -> bool:
        return self.two_coloring() is not None


def graph_laplacian(graph: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``D_deg - A``."""
    return np.diag(graph.degrees()) - graph.adjacency()


@dataclass(frozen=True)
class CellularSheaf:
    """Sheaf with uniform stalk dimension ``k``.

    ``maps[i]`` is the pair ``(F_{u<e}, F_{v<e})`` for ``graph.edges[i] = (u, v)``.
    """

    graph: Graph
    stalk_dim: int
    maps: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        k = int(self.stalk_dim)
        if k < 1:
            raise InvalidSheaf(f"stalk_dim must be positive, got {k}")
        if len(self.maps) != self.graph.num_edges:
            raise InvalidSheaf(
                f"expected {self.graph.num_edges} restriction-map pairs, got {len(self.maps)}"
            )
        frozen = []
        for i, pair in enumerate(self.maps):
            if len(pair) != 2:
                raise InvalidSheaf(f"edge {i}: need exactly two restriction maps")
            fu, fv = _frozen(pair[0]), _frozen(pair[1])
            if fu.shape != (k, k) or fv.shape != (k, k):
                raise InvalidSheaf(f"edge {i}: restriction maps must be {k}x{k}")
            frozen.append((fu, fv))
        object.__setattr__(self, "stalk_dim", k)
        object.__setattr__(self, "maps", tuple(frozen))

    @property
    def size(self) -> int:
        """Dimension of the space of 0-cochains, ``N*k``."""
        return self.graph.num_nodes * self.stalk_dim

    def restriction(self, edge_index: int, node: int) -> np.ndarray:
        u, v = self.graph.edges[edge_index]
        if node == u:
            return self.maps[edge_index][0]
        if node == v:
            return self.maps[edge_index][1]
        raise InvalidSheaf(f"node {node} is not incident to edge {self.graph.edges[edge_index]}")


def sheaf_from_maps(
    graph: Graph, k: int, maps: Iterable[tuple[np.ndarray, np.ndarray]]
) -> CellularSheaf:
    return CellularSheaf(graph, k, tuple(maps))


def constant_sheaf(graph: Graph, k: int = 1) -> CellularSheaf:
    eye = np.eye(k)
    return CellularSheaf(graph, k, tuple((eye, eye) for _ in graph.edges))


def signed_sheaf(graph: Graph, k: int, signs: Sequence[int]) -> CellularSheaf:
    """Identity maps, except that a ``-1`` edge gets ``-I`` on its head."""
    signs = list(signs)
    if len(signs) != graph.num_edges:
        raise InvalidSheaf(f"need {graph.num_edges} signs, got {len(signs)}")
    eye = np.eye(k)
    maps = []
    for s in signs:
        if s not in (1, -1):
            raise InvalidSheaf(f"edge signs must be +1 or -1, got {s}")
        maps.append((eye, s * eye))
    return CellularSheaf(graph, k, tuple(maps))


def random_sheaf(graph: Graph, k: int, rng: np.random.Generator) -> CellularSheaf:
    """Restriction maps with i.i.d. standard normal entries."""
    return CellularSheaf(
        graph, k, tuple((rng.standard_normal((k, k)), rng.standard_normal((k, k))) for _ in graph.edges)
    )


@dataclass(frozen=True)
class Coboundary:
    matrix: np.ndarray
    stalk_dim: int
    num_nodes: int


def coboundary(sheaf: CellularSheaf) -> Coboundary:
    """Assemble ``delta`` with ``(delta x)_e = F_{v<e} x_v - F_{u<e} x_u`` for ``e = u -> v``."""
    k = sheaf.stalk_dim
    n = sheaf.graph.num_nodes
    delta = np.zeros((sheaf.graph.num_edges * k, n * k))
    for i, (u, v) in enumerate(sheaf.graph.edges):
        fu, fv = sheaf.maps[i]
        rows = slice(i * k, (i + 1) * k)
        delta[rows, u * k:(u + 1) * k] = -fu
        delta[rows, v * k:(v + 1) * k] = fv
    return Coboundary(_frozen(delta), k, n)


def _diagonal_blocks(M: np.ndarray, k: int) -> np.ndarray:
    n = M.shape[0] // k
    return np.stack([M[i * k:(i + 1) * k, i * k:(i + 1) * k] for i in range(n)])


def _block_diag(blocks: np.ndarray) -> np.ndarray:
    n, k, _ = blocks.shape
    out = np.zeros((n * k, n * k))
    for i in range(n):
        out[i * k:(i + 1) * k, i * k:(i + 1) * k] = blocks[i]
    return out


@dataclass(frozen=True)
class SheafLaplacian:
    matrix: np.ndarray
    block_degree: np.ndarray
    stalk_dim: int
    normalized: bool = False

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0] // self.stalk_dim


def sheaf_laplacian(cob: Coboundary) -> SheafLaplacian:
    d = cob.matrix
    L = d.T @ d
    L = 0.5 * (L + L.T)
    if L.shape[0] == 0:
        L = np.zeros((cob.num_nodes * cob.stalk_dim,) * 2)
    deg = _block_diag(_diagonal_blocks(L, cob.stalk_dim))
    return SheafLaplacian(_frozen(L), _frozen(deg), cob.stalk_dim)


def laplacian_of(sheaf: CellularSheaf) -> SheafLaplacian:
    """Shortcut for ``sheaf_laplacian(coboundary(sheaf))``."""
    return sheaf_laplacian(coboundary(sheaf))


def _inv_sqrt_block(block: np.ndarray, strict: bool, node: int) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (block + block.T))
    small = vals <= EIG_FLOOR
    if small.any() and strict:
        raise SingularDegreeBlock(
            f"degree block of node {node} has eigenvalue {vals.min():.3e} <= {EIG_FLOOR}"
        )
    inv = np.where(small, 0.0, 1.0 / np.sqrt(np.where(small, 1.0, vals)))
    return (vecs * inv) @ vecs.T


def normalized_laplacian(lap: SheafLaplacian, strict: bool = False) -> SheafLaplacian:
    """``D^{-1/2} L D^{-1/2}`` with ``D`` the block diagonal of ``L``.

    Singular degree blocks use the pseudo-inverse square root unless
    ``strict`` is set, in which case :class:`SingularDegreeBlock` is raised.
    """
    if lap.normalized:
        return lap
    k = lap.stalk_dim
    blocks = _diagonal_blocks(lap.block_degree, k)
    dinv = _block_diag(np.stack([_inv_sqrt_block(b, strict, i) for i, b in enumerate(blocks)]))
    Ln = dinv @ lap.matrix @ dinv
    Ln = 0.5 * (Ln + Ln.T)
    deg = _block_diag(_diagonal_blocks(Ln, k))
    return SheafLaplacian(_frozen(Ln), _frozen(deg), k, normalized=True)


@dataclass(frozen=True)
class DiffusionOperator:
    matrix: np.ndarray
    kind: str
    stalk_dim: int
    alpha: Optional[float] = None
    absorbed_B: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.size // self.stalk_dim


def diffusion_operator(
    lap: SheafLaplacian,
    kind: DiffusionKind = "normalized",
    alpha: Optional[float] = None,
    B: Optional[np.ndarray] = None,
    strict: bool = False,
) -> DiffusionOperator:
    """Build ``I - alpha L`` or ``I - L_norm``, optionally right-multiplied by ``I (x) B``.

    For ``alpha_scaled`` the default ``alpha`` is ``1 / lambda_max(L)``.
    """
    n = lap.matrix.shape[0]
    k = lap.stalk_dim
    if kind == "normalized":
        D = np.eye(n) - normalized_laplacian(lap, strict=strict).matrix
    elif kind == "alpha_scaled":
        lam_max = float(np.linalg.eigvalsh(lap.matrix)[-1]) if n else 0.0
        if alpha is None:
            alpha = 1.0 / lam_max if lam_max > EIG_FLOOR else 1.0
        alpha = float(alpha)
        if alpha < 0 or (lam_max > EIG_FLOOR and alpha > 2.0 / lam_max * (1 + 1e-12)):
            raise AlphaOutOfRange(f"alpha={alpha} outside [0, 2/lambda_max={2.0 / max(lam_max, EIG_FLOOR):.6g}]")
        D = np.eye(n) - alpha * lap.matrix
    else:
        raise ValueError(f"unknown diffusion kind {kind!r}")
    if B is not None:
        B = np.asarray(B, dtype=float)
        if B.shape != (k, k):
            raise ShapeMismatch(f"B must be {k}x{k}, got {B.shape}")
        D = D @ np.kron(np.eye(n // k), B)
        B = _frozen(B)
    return DiffusionOperator(_frozen(D), kind, k, alpha if kind == "alpha_scaled" else None, B)


def diffusion_power(op: DiffusionOperator | np.ndarray, l: int) -> np.ndarray:
    if l < 0:
        raise ValueError("power must be nonnegative")
    M = op.matrix if isinstance(op, DiffusionOperator) else np.asarray(op)
    return np.linalg.matrix_power(M, l)


def harmonic_projection(lap: SheafLaplacian) -> np.ndarray:
    """Orthogonal projector onto the zero eigenspace of ``lap``."""
    vals, vecs = np.linalg.eigh(lap.matrix)
    scale = max(abs(vals).max(initial=0.0), 0.0)
    if scale == 0.0:
        return np.eye(lap.matrix.shape[0])
    U = vecs[:, np.abs(vals) < RANK_RTOL * scale]
    P = U @ U.T
    return 0.5 * (P + P.T)


def global_sections(sheaf: CellularSheaf) -> np.ndarray:
    """Orthonormal basis (columns) of ``ker delta``, computed from the SVD of ``delta``."""
    d = coboundary(sheaf).matrix
    n = sheaf.size
    if d.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(d, full_matrices=True)
    smax = s.max(initial=0.0)
    rank = int((s > RANK_RTOL * smax).sum()) if smax > 0 else 0
    return vt[rank:].T
