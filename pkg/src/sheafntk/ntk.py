"""Analytic neural tangent kernels of sheaf convolutional networks.

The layer-summed kernel is

    Theta = sum_{l=1}^{L+1} Sigma_l * (D D'^T)^{*(L+1-l)} * Pi_l

where ``*`` is the element-wise product, ``Sigma_l`` follows the covariance
recursion ``Sigma_l = D H_{l-1} D'^T`` and ``Pi_l`` is the element-wise
product of the derivative kernels ``Hdot_l ... Hdot_L`` (empty product = 1).

:func:`ntk_exact` is the matrix-sandwich recursion
``Theta_{l+1} = Sigma_{l+1} + D (Hdot_l * Theta_l) D'^T``, which is what the
empirical kernel of a wide network with a linear diffusion head converges to.
It differs from the Hadamard form whenever ``D`` is not diagonal, and is kept
here so that the two can be compared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np

from .errors import NonPositiveVariance, ShapeMismatch
from .sheaf import DiffusionOperator, Graph

Activation = Literal["relu", "identity"]
MatrixLike = Union[np.ndarray, DiffusionOperator]

DEGENERATE_VAR = 1e-18
NEG_VAR_TOL = 1e-9
DEGENERATE_HDOT = 0.25
# arccos is infinitely steep at +-1, so rounding noise in a cosine that is
# exactly +-1 in exact arithmetic would otherwise leak ~1e-8 into Hdot
COS_SNAP = 1e-12


def _mat(D: MatrixLike) -> np.ndarray:
    return D.matrix if isinstance(D, DiffusionOperator) else np.asarray(D, dtype=float)


# -- Gaussian expectations -------------------------------------------------

def relu_expectations(s_ab, s_aa, s_bb):
    """Element-wise ``E[relu(a) relu(b)]`` and ``E[1{a>0} 1{b>0}]``.

    ``(a, b)`` is a centred Gaussian pair with variances ``s_aa, s_bb`` and
    covariance ``s_ab``. Arguments broadcast against each other.
    """
    s_ab, s_aa, s_bb = np.broadcast_arrays(
        np.asarray(s_ab, float), np.asarray(s_aa, float), np.asarray(s_bb, float)
    )
    if (s_aa < -NEG_VAR_TOL).any() or (s_bb < -NEG_VAR_TOL).any():
        worst = min(s_aa.min(), s_bb.min())
        raise NonPositiveVariance(f"variance {worst:.3e} below -{NEG_VAR_TOL}")
    prod = np.clip(s_aa, 0, None) * np.clip(s_bb, 0, None)
    degenerate = prod <= DEGENERATE_VAR
    norm = np.sqrt(np.where(degenerate, 1.0, prod))
    cos = np.clip(s_ab / norm, -1.0, 1.0)
    cos = np.where(np.abs(cos) >= 1.0 - COS_SNAP, np.sign(cos), cos)
    theta = np.arccos(cos)
    # sqrt(1 - cos^2) rather than sin(arccos): exactly zero at cos = +-1
    H = norm / (2 * np.pi) * (np.sqrt(1.0 - cos * cos) + (np.pi - theta) * cos)
    Hdot = (np.pi - theta) / (2 * np.pi)
    H = np.where(degenerate, 0.0, H)
    Hdot = np.where(degenerate, DEGENERATE_HDOT, Hdot)
    return H, Hdot


def activation_expectation(s_aa: float, s_ab: float, s_bb: float, activation: Activation = "relu"):
    """Return ``(H_ab, Hdot_ab)`` for one covariance entry."""
    if activation == "identity":
        if s_aa < -NEG_VAR_TOL or s_bb < -NEG_VAR_TOL:
            raise NonPositiveVariance(f"variance below -{NEG_VAR_TOL}")
        return float(s_ab), 1.0
    if activation != "relu":
        raise ValueError(f"unsupported activation {activation!r}")
    H, Hd = relu_expectations(s_ab, s_aa, s_bb)
    return float(H), float(Hd)


def _expectations(S_cross, diag_a, diag_b, activation):
    if activation == "identity":
        if (diag_a < -NEG_VAR_TOL).any() or (diag_b < -NEG_VAR_TOL).any():
            raise NonPositiveVariance(f"variance below -{NEG_VAR_TOL}")
        return S_cross.copy(), np.ones_like(S_cross)
    if activation == "relu":
        return relu_expectations(S_cross, diag_a[:, None], diag_b[None, :])
    raise ValueError(f"unsupported activation {activation!r}")


# -- covariance recursion --------------------------------------------------

@dataclass(frozen=True)
class CovarianceSequence:
    """``sigma[l]`` for ``l = 0 .. L+1``; ``sigma[0] = X X'^T``."""

    sigma: tuple[np.ndarray, ...]

    def __getitem__(self, l: int) -> np.ndarray:
        return self.sigma[l]

    def __len__(self) -> int:
        return len(self.sigma)


@dataclass(frozen=True)
class ActivationKernels:
    """``H[l-1]`` and ``Hdot[l-1]`` hold the layer-``l`` kernels, ``l = 1 .. L``."""

    H: tuple[np.ndarray, ...]
    Hdot: tuple[np.ndarray, ...]
    activation: str

    @property
    def num_layers(self) -> int:
        return len(self.Hdot)

    def h(self, l: int) -> np.ndarray:
        return self.H[l - 1]

    def hdot(self, l: int) -> np.ndarray:
        return self.Hdot[l - 1]


def _check_shapes(D, D2, X, X2):
    n = X.shape[0]
    if D.shape != (n, n):
        raise ShapeMismatch(f"diffusion {D.shape} incompatible with signal rows {n}")
    if D2.shape != (X2.shape[0], X2.shape[0]):
        raise ShapeMismatch(f"diffusion {D2.shape} incompatible with signal rows {X2.shape[0]}")
    if X.shape[1] != X2.shape[1]:
        raise ShapeMismatch(f"channel counts differ: {X.shape[1]} vs {X2.shape[1]}")


def _self_diagonals(D, X, L, activation):
    """Diagonals of the self-covariances ``Sigma_l(F, F)``, ``l = 1 .. L``."""
    S = D @ (X @ X.T) @ D.T
    diags = [np.diag(S).copy()]
    for _ in range(1, L):
        d = np.diag(S)
        H, _ = _expectations(S, d, d, activation)
        S = D @ H @ D.T
        diags.append(np.diag(S).copy())
    return diags


def sigma_recursion(
    D: MatrixLike,
    D2: MatrixLike,
    X: np.ndarray,
    X2: np.ndarray,
    L: int,
    activation: Activation = "relu",
) -> tuple[CovarianceSequence, ActivationKernels]:
    """Covariances ``Sigma_0 .. Sigma_{L+1}`` and activation kernels of layers ``1 .. L``.

    For a cross pair the Gaussian expectations need the self-variances of
    each input, which are obtained from the two self-recursions.
    """
    D, D2 = _mat(D), _mat(D2)
    X, X2 = np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(X2, float))
    _check_shapes(D, D2, X, X2)
    if L < 0:
        raise ValueError("L must be nonnegative")
    same = D is D2 and X is X2 or (
        D.shape == D2.shape and X.shape == X2.shape and np.array_equal(D, D2) and np.array_equal(X, X2)
    )
    S = D @ (X @ X2.T) @ D2.T
    sigmas = [X @ X2.T, S]
    if L == 0:
        return CovarianceSequence(tuple(sigmas)), ActivationKernels((), (), activation)
    diag_a = _self_diagonals(D, X, L, activation)
    diag_b = diag_a if same else _self_diagonals(D2, X2, L, activation)
    Hs, Hds = [], []
    for l in range(1, L + 1):
        H, Hd = _expectations(sigmas[l], diag_a[l - 1], diag_b[l - 1], activation)
        Hs.append(H)
        Hds.append(Hd)
        sigmas.append(D @ H @ D2.T)
    return CovarianceSequence(tuple(sigmas)), ActivationKernels(tuple(Hs), tuple(Hds), activation)


# -- kernels -----------------------------------------------------------------

@dataclass(frozen=True)
class NtkResult:
    theta: np.ndarray
    delta: tuple[np.ndarray, ...] = ()
    pi: tuple[np.ndarray, ...] = ()
    sigma: Optional[CovarianceSequence] = field(default=None, repr=False)
    kernels: Optional[ActivationKernels] = field(default=None, repr=False)
    stalk_dim: int = 1


def _hadamard_power(M: np.ndarray, p: int) -> np.ndarray:
    out = np.ones_like(M)
    for _ in range(p):
        out = out * M
    return out


def ntk_full(
    D: MatrixLike,
    D2: MatrixLike,
    X: np.ndarray,
    X2: np.ndarray,
    L: int,
    activation: Activation = "relu",
    pi_index: Literal["through_last", "as_printed"] = "through_last",
    stalk_dim: Optional[int] = None,
) -> NtkResult:
    """Layer-summed kernel ``sum_l Delta_l * Pi_l``.

    ``pi_index="through_last"`` multiplies ``Hdot_l .. Hdot_L`` into ``Pi_l``.
    ``"as_printed"`` uses the upper index ``L+1-l`` instead (empty, hence all
    ones, once it drops below ``l``); it exists only for comparison.
    """
    Dm, D2m = _mat(D), _mat(D2)
    _same_size(Dm, D2m)
    sig, ker = sigma_recursion(Dm, D2m, X, X2, L, activation)
    DD = Dm @ D2m.T
    ones = np.ones_like(DD)
    deltas, pis = [], []
    theta = np.zeros_like(DD)
    for l in range(1, L + 2):
        delta = sig[l] * _hadamard_power(DD, L + 1 - l)
        upper = L if pi_index == "through_last" else L + 1 - l
        pi = ones.copy()
        for i in range(l, min(upper, L) + 1):
            pi = pi * ker.hdot(i)
        deltas.append(delta)
        pis.append(pi)
        theta = theta + delta * pi
    return NtkResult(theta, tuple(deltas), tuple(pis), sig, ker, _stalk(D, stalk_dim))


def ntk_exact(
    D: MatrixLike,
    D2: MatrixLike,
    X: np.ndarray,
    X2: np.ndarray,
    L: int,
    activation: Activation = "relu",
    stalk_dim: Optional[int] = None,
) -> NtkResult:
    """Infinite-width limit of ``L`` activated layers followed by a linear diffusion head."""
    Dm, D2m = _mat(D), _mat(D2)
    sig, ker = sigma_recursion(Dm, D2m, X, X2, L, activation)
    theta = sig[1]
    for l in range(1, L + 1):
        theta = sig[l + 1] + Dm @ (ker.hdot(l) * theta) @ D2m.T
    return NtkResult(theta, sigma=sig, kernels=ker, stalk_dim=_stalk(D, stalk_dim))


def ntk_linear(
    D: MatrixLike, D2: MatrixLike, X: np.ndarray, X2: np.ndarray, L: int,
    stalk_dim: Optional[int] = None,
) -> NtkResult:
    """Identity-activation kernel evaluated directly from matrix powers."""
    Dm, D2m = _mat(D), _mat(D2)
    X, X2 = np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(X2, float))
    _check_shapes(Dm, D2m, X, X2)
    _same_size(Dm, D2m)
    DD = Dm @ D2m.T
    G = X @ X2.T
    deltas = []
    for l in range(1, L + 2):
        Dl = np.linalg.matrix_power(Dm, l)
        D2l = np.linalg.matrix_power(D2m, l)
        deltas.append(Dl @ G @ D2l.T * _hadamard_power(DD, L + 1 - l))
    theta = np.sum(deltas, axis=0)
    ones = tuple(np.ones_like(DD) for _ in deltas)
    return NtkResult(theta, tuple(deltas), ones, stalk_dim=_stalk(D, stalk_dim))


def ntk_simple_gcn(D: MatrixLike, D2: MatrixLike, X: np.ndarray, X2: np.ndarray, L: int) -> np.ndarray:
    Dm, D2m = _mat(D), _mat(D2)
    X, X2 = np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(X2, float))
    _check_shapes(Dm, D2m, X, X2)
    _same_size(Dm, D2m)
    DL = np.linalg.matrix_power(Dm, L)
    D2L = np.linalg.matrix_power(D2m, L)
    return DL @ X @ X2.T @ D2L.T * (Dm @ D2m.T)


def _same_size(D, D2):
    # the Hadamard factor D D'^T needs both sheaves on the same number of nodes
    if D.shape != D2.shape:
        raise ShapeMismatch(f"Hadamard-form kernels need equal operator sizes, got {D.shape} and {D2.shape}")


def _stalk(D, stalk_dim):
    if stalk_dim is not None:
        return int(stalk_dim)
    return D.stalk_dim if isinstance(D, DiffusionOperator) else 1


KERNELS = {
    "full": lambda D, D2, X, X2, L, act: ntk_full(D, D2, X, X2, L, act).theta,
    "exact": lambda D, D2, X, X2, L, act: ntk_exact(D, D2, X, X2, L, act).theta,
    "linear": lambda D, D2, X, X2, L, act: ntk_linear(D, D2, X, X2, L).theta,
    "simple_gcn": lambda D, D2, X, X2, L, act: ntk_simple_gcn(D, D2, X, X2, L),
}


def kernel_matrix(kind: str, D, D2, X, X2, L: int, activation: Activation = "relu") -> np.ndarray:
    try:
        fn = KERNELS[kind]
    except KeyError:
        raise ValueError(f"unknown kernel kind {kind!r}; choose from {sorted(KERNELS)}") from None
    return fn(D, D2, X, X2, L, activation)


# -- graph-only cross-check --------------------------------------------------

def _graph_diffusion(graph: Graph, kind: str, alpha: Optional[float]) -> np.ndarray:
    import networkx as nx

    g = nx.Graph()
    g.add_nodes_from(range(graph.num_nodes))
    g.add_edges_from(graph.edges)
    nodes = list(range(graph.num_nodes))
    n = graph.num_nodes
    if kind == "normalized":
        if graph.num_edges == 0:
            return np.eye(n)
        return np.eye(n) - nx.normalized_laplacian_matrix(g, nodelist=nodes).toarray()
    Lg = nx.laplacian_matrix(g, nodelist=nodes).toarray().astype(float)
    if alpha is None:
        lam = max(np.linalg.eigvalsh(Lg)) if n else 0.0
        alpha = 1.0 / lam if lam > 1e-12 else 1.0
    return np.eye(n) - alpha * Lg


def _scalar_relu(saa, sab, sbb):
    if saa < -NEG_VAR_TOL or sbb < -NEG_VAR_TOL:
        raise NonPositiveVariance("negative variance")
    p = max(saa, 0.0) * max(sbb, 0.0)
    if p <= DEGENERATE_VAR:
        return 0.0, DEGENERATE_HDOT
    r = math.sqrt(p)
    c = min(1.0, max(-1.0, sab / r))
    if abs(c) >= 1.0 - COS_SNAP:
        c = math.copysign(1.0, c)
    t = math.acos(c)
    return r * (math.sqrt(1.0 - c * c) + (math.pi - t) * c) / (2 * math.pi), (math.pi - t) / (2 * math.pi)


def gntk_reference(
    graph: Graph,
    graph2: Graph,
    X: np.ndarray,
    X2: np.ndarray,
    L: int,
    activation: Activation = "relu",
    diffusion: str = "normalized",
    alpha: Optional[float] = None,
) -> np.ndarray:
    """The same layer-summed kernel for scalar node signals, built from networkx
    Laplacians and entry-by-entry Gaussian expectations."""
    A = _graph_diffusion(graph, diffusion, alpha)
    B = _graph_diffusion(graph2, diffusion, alpha)
    X = np.atleast_2d(np.asarray(X, float))
    X2 = np.atleast_2d(np.asarray(X2, float))
    n, m = X.shape[0], X2.shape[0]
    if A.shape[0] != n or B.shape[0] != m:
        raise ShapeMismatch("signals must have one row per node")

    def expect(Sab, va, vb):
        H = np.empty_like(Sab)
        Hd = np.empty_like(Sab)
        for i in range(Sab.shape[0]):
            for j in range(Sab.shape[1]):
                if activation == "identity":
                    H[i, j], Hd[i, j] = Sab[i, j], 1.0
                else:
                    H[i, j], Hd[i, j] = _scalar_relu(va[i], Sab[i, j], vb[j])
        return H, Hd

    # self and cross covariances advanced together
    Saa, Sbb, Sab = A @ X @ X.T @ A.T, B @ X2 @ X2.T @ B.T, A @ X @ X2.T @ B.T
    cov = [Sab]
    hdots = []
    for _ in range(L):
        va, vb = np.diag(Saa).copy(), np.diag(Sbb).copy()
        Haa, _ = expect(Saa, va, va)
        Hbb, _ = expect(Sbb, vb, vb)
        Hab, Hdab = expect(Sab, va, vb)
        hdots.append(Hdab)
        Saa, Sbb, Sab = A @ Haa @ A.T, B @ Hbb @ B.T, A @ Hab @ B.T
        cov.append(Sab)
    AB = A @ B.T
    theta = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            total = 0.0
            # mask accumulated from the last layer backwards
            mask = 1.0
            for l in range(L + 1, 0, -1):
                if l <= L:
                    mask *= hdots[l - 1][i, j]
                total += cov[l - 1][i, j] * AB[i, j] ** (L + 1 - l) * mask
            theta[i, j] = total
    return theta


# -- readout reductions ----------------------------------------------------

def reduce_kernel(
    theta: Union[NtkResult, np.ndarray],
    task: Literal["graph_sum", "node_pair"] = "graph_sum",
    stalk_dim: Optional[int] = None,
    nodes: Optional[tuple[int, int]] = None,
    trace: bool = True,
):
    """Reduce a block kernel to what a readout sees.

    ``graph_sum`` gives ``1^T Theta 1``. ``node_pair`` gives the ``k x k``
    block for ``nodes = (v, v')`` (its trace when ``trace``), or, when
    ``nodes`` is omitted, the ``N x N`` matrix of block traces.
    """
    if isinstance(theta, NtkResult):
        k = theta.stalk_dim if stalk_dim is None else stalk_dim
        T = theta.theta
    else:
        k = 1 if stalk_dim is None else stalk_dim
        T = np.asarray(theta)
    if task == "graph_sum":
        return float(T.sum())
    if task != "node_pair":
        raise ValueError(f"unknown reduction {task!r}")
    if nodes is None:
        n, m = T.shape[0] // k, T.shape[1] // k
        return np.einsum("iaja->ij", T.reshape(n, k, m, k)) if trace else T
    v, w = nodes
    block = T[v * k:(v + 1) * k, w * k:(w + 1) * k]
    return float(np.trace(block)) if trace else block.copy()


def layer_terms_reduced(result: NtkResult) -> list[float]:
    """``1^T (Delta_l * Pi_l) 1`` for each layer term."""
    return [float((d * p).sum()) for d, p in zip(result.delta, result.pi)]


def relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b||_F / ||b||_F``."""
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a - b))


__all__ = [
    "ActivationKernels",
    "CovarianceSequence",
    "NtkResult",
    "activation_expectation",
    "gntk_reference",
    "kernel_matrix",
    "ntk_exact",
    "ntk_full",
    "ntk_linear",
    "ntk_simple_gcn",
    "reduce_kernel",
    "relative_frobenius",
    "relu_expectations",
    "sigma_recursion",
]
