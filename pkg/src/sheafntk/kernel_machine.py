"""Kernel ridge regression on tangent-kernel Gram matrices."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import IncompatibleItems, ShapeMismatch, SingularSystem
from .ntk import kernel_matrix, reduce_kernel
from .sheaf import CellularSheaf, diffusion_operator, laplacian_of

SINGULAR_RTOL = 1e-10
INDEFINITE_RTOL = 1e-8


@dataclass(frozen=True)
class KernelConfig:
    L: int = 2
    activation: str = "relu"
    kernel_kind: str = "full"
    diffusion: str = "normalized"
    alpha: Optional[float] = None


@dataclass
class LabeledDataset:
    """Graph task: one ``(sheaf, signal)`` per item. Node task: a single item
    plus ``nodes``, the node indices the labels refer to."""

    items: list[tuple[CellularSheaf, np.ndarray]]
    labels: np.ndarray
    nodes: Optional[np.ndarray] = None
    ids: Optional[list[str]] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=float)
        if self.nodes is not None:
            self.nodes = np.asarray(self.nodes, dtype=int)
            if len(self.items) != 1:
                raise IncompatibleItems("a node task has exactly one (sheaf, signal) item")
            count = len(self.nodes)
        else:
            count = len(self.items)
        if len(self.labels) != count:
            raise IncompatibleItems(f"{len(self.labels)} labels for {count} items")
        if self.ids is None:
            self.ids = [str(i) for i in (self.nodes if self.nodes is not None else range(count))]

    @property
    def is_node_task(self) -> bool:
        return self.nodes is not None


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    ids: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _operator(sheaf: CellularSheaf, cfg: KernelConfig):
    return diffusion_operator(laplacian_of(sheaf), cfg.diffusion, alpha=cfg.alpha)


def _pair_kernel(a, b, cfg: KernelConfig) -> np.ndarray:
    (sa, xa), (sb, xb) = a, b
    return kernel_matrix(cfg.kernel_kind, _operator(sa, cfg), _operator(sb, cfg), xa, xb, cfg.L, cfg.activation)


def _check_items(items):
    k = {s.stalk_dim for s, _ in items}
    n = {s.graph.num_nodes for s, _ in items}
    if len(k) > 1:
        raise IncompatibleItems(f"items have differing stalk dimensions {sorted(k)}")
    if len(n) > 1:
        raise IncompatibleItems(f"items have differing node counts {sorted(n)}")
    for s, x in items:
        if np.asarray(x).shape[0] != s.size:
            raise IncompatibleItems(f"signal with {np.asarray(x).shape[0]} rows on a sheaf of size {s.size}")


def node_kernel(sheaf: CellularSheaf, X: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """``N x N`` matrix of block traces of the self-kernel on one sheaf."""
    theta = _pair_kernel((sheaf, X), (sheaf, X), cfg)
    return reduce_kernel(theta, "node_pair", stalk_dim=sheaf.stalk_dim)


def assemble_gram(
    dataset: LabeledDataset,
    cfg: KernelConfig,
    reduce: Literal["graph_sum", "node_trace"] = "graph_sum",
) -> GramMatrix:
    if dataset.is_node_task:
        sheaf, X = dataset.items[0]
        _check_items(dataset.items)
        K = node_kernel(sheaf, X, cfg)[np.ix_(dataset.nodes, dataset.nodes)]
    else:
        if reduce != "graph_sum":
            raise IncompatibleItems("graph datasets reduce with graph_sum")
        _check_items(dataset.items)
        n = len(dataset.items)
        K = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                K[i, j] = reduce_kernel(_pair_kernel(dataset.items[i], dataset.items[j], cfg), "graph_sum")
    K = 0.5 * (K + K.T)
    return GramMatrix(K, tuple(dataset.ids))


def cross_gram(test: LabeledDataset, train: LabeledDataset, cfg: KernelConfig) -> np.ndarray:
    """``(m x n)`` kernel block between test and training items."""
    if train.is_node_task:
        sheaf, X = train.items[0]
        K = node_kernel(sheaf, X, cfg)
        return K[np.ix_(test.nodes, train.nodes)]
    _check_items(list(test.items) + list(train.items))
    return np.array(
        [[reduce_kernel(_pair_kernel(a, b, cfg), "graph_sum") for b in train.items] for a in test.items]
    ).reshape(len(test.items), len(train.items))


@dataclass(frozen=True)
class RidgeModel:
    alpha: np.ndarray
    lam: float
    train_ids: tuple[str, ...] = ()
    gram: Optional[np.ndarray] = field(default=None, repr=False)
    pseudo_solve: bool = False


def _solve(K: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, bool]:
    n = K.shape[0]
    A = K + lam * np.eye(n)
    w = np.linalg.eigvalsh(A)
    scale = max(abs(w).max(initial=0.0), np.finfo(float).tiny)
    if lam == 0 and w.min() <= SINGULAR_RTOL * scale:
        raise SingularSystem(f"Gram matrix is singular (min eigenvalue {w.min():.3e}, max {scale:.3e}) and lambda = 0")
    if w.min() >= -INDEFINITE_RTOL * scale:
        try:
            return scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), y), False
        except np.linalg.LinAlgError:
            pass
    w, V = np.linalg.eigh(A)
    floor = SINGULAR_RTOL * scale
    inv = np.where(w > floor, 1.0 / np.where(w > floor, w, 1.0), 0.0)
    return V @ (inv * (V.T @ y)), True


def fit(gram: GramMatrix | np.ndarray, y: Sequence[float], lam: float) -> RidgeModel:
    """Solve ``(K + lam I) alpha = y``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    K = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, float)
    ids = gram.ids if isinstance(gram, GramMatrix) else ()
    y = np.asarray(y, float)
    if K.shape != (len(y), len(y)):
        raise ShapeMismatch(f"Gram {K.shape} does not match {len(y)} labels")
    alpha, pseudo = _solve(K, y, float(lam))
    return RidgeModel(alpha, float(lam), tuple(ids), K, pseudo)


def predict(model: RidgeModel, cross: np.ndarray) -> np.ndarray:
    cross = np.atleast_2d(np.asarray(cross, float))
    if cross.shape[1] != len(model.alpha):
        raise ShapeMismatch(f"cross kernel has {cross.shape[1]} columns, model has {len(model.alpha)} training items")
    return cross @ model.alpha


def classify(scores: np.ndarray) -> np.ndarray:
    """Sign with ``sign(0) = +1``."""
    return np.where(np.asarray(scores) >= 0, 1, -1)


def residual(model: RidgeModel, y: Sequence[float]) -> float:
    y = np.asarray(y, float)
    A = model.gram + model.lam * np.eye(len(y))
    return float(np.linalg.norm(A @ model.alpha - y) / np.linalg.norm(y))


def loo_predictions(gram: GramMatrix | np.ndarray, y: Sequence[float], lam: float) -> np.ndarray:
    """Closed-form leave-one-out predictions ``y_i - alpha_i / [(K + lam I)^-1]_ii``."""
    K = gram.entries if isinstance(gram, GramMatrix) else np.asarray(gram, float)
    y = np.asarray(y, float)
    A = K + lam * np.eye(len(y))
    if lam == 0:
        _solve(K, y, 0.0)
    G = scipy.linalg.pinvh(A) if lam == 0 else scipy.linalg.inv(A)
    alpha = G @ y
    return y - alpha / np.diag(G)


def loo_accuracy(gram: GramMatrix | np.ndarray, y: Sequence[float], lam: float) -> float:
    y = np.asarray(y, float)
    return float(np.mean(classify(loo_predictions(gram, y, lam)) == np.sign(y)))


def lambda_sweep(gram: GramMatrix | np.ndarray, y: Sequence[float], lams: Sequence[float]) -> list[tuple[float, float]]:
    return [(float(l), loo_accuracy(gram, y, l)) for l in lams]
