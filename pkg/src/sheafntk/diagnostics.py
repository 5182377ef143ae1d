"""Spectral and combinatorial diagnostics: Cheeger constants, mixing bounds,
oversmoothing curves, random-walk kernels and ReLU path-mask statistics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal, Optional

import numpy as np

from .errors import DisconnectedGraph, InvalidGraph, TooLarge
from .ntk import ActivationKernels
from .sheaf import (
    DiffusionOperator,
    Graph,
    SheafLaplacian,
    harmonic_projection,
    normalized_laplacian,
)

CHEEGER_MAX_NODES = 24
MASK_THRESHOLD = 0.05
_CHUNK = 1 << 16


@dataclass
class CheegerReport:
    """Exact values are ``None`` when the brute force was skipped.

    ``exact_h`` is the edge expansion ``min |dS| / min(|S|, |S^c|)``;
    ``exact_conductance`` replaces set sizes by volumes (degree sums). The
    spectral bounds ``lambda_2/2`` and ``sqrt(2 lambda_2)`` of the normalized
    graph Laplacian sandwich the conductance.
    """

    lower_bound: float
    upper_bound: float
    lambda_2: float
    exact_h: Optional[float] = None
    witness_set: Optional[list[int]] = None
    exact_conductance: Optional[float] = None
    conductance_witness: Optional[list[int]] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _require_connected(graph: Graph):
    if graph.num_nodes < 2:
        raise InvalidGraph("Cheeger quantities need at least two nodes")
    if not graph.is_connected():
        raise DisconnectedGraph("graph is not connected")


def normalized_lambda_2(graph: Graph) -> float:
    deg = graph.degrees()
    with np.errstate(divide="ignore"):
        inv = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
    Ln = np.eye(graph.num_nodes) - inv[:, None] * graph.adjacency() * inv[None, :]
    return float(np.linalg.eigvalsh(Ln)[1])


def cheeger_bounds(graph: Graph) -> tuple[float, float]:
    _require_connected(graph)
    lam = normalized_lambda_2(graph)
    return lam / 2, math.sqrt(2 * lam)


def _cut_ratios(graph: Graph):
    """Brute force over all S containing node 0 (complements cover the rest)."""
    n = graph.num_nodes
    deg = graph.degrees()
    edges = np.array(graph.edges, dtype=np.int64).reshape(-1, 2)
    total_vol = deg.sum()
    best = (math.inf, 0)
    best_c = (math.inf, 0)
    count = 1 << (n - 1)
    node_bits = np.arange(n, dtype=np.int64)
    for start in range(0, count - 1, _CHUNK):
        m = np.arange(start, min(start + _CHUNK, count - 1), dtype=np.int64)
        # bit 0 is the anchor node, always in S
        masks = (m << 1) | 1
        member = (masks[:, None] >> node_bits[None, :]) & 1
        size = member.sum(axis=1)
        vol = member @ deg
        boundary = (member[:, edges[:, 0]] != member[:, edges[:, 1]]).sum(axis=1)
        h = boundary / np.minimum(size, n - size)
        phi = boundary / np.minimum(vol, total_vol - vol)
        i, j = int(np.argmin(h)), int(np.argmin(phi))
        if h[i] < best[0]:
            best = (float(h[i]), int(masks[i]))
        if phi[j] < best_c[0]:
            best_c = (float(phi[j]), int(masks[j]))
    as_set = lambda mask: [v for v in range(n) if mask >> v & 1]
    return best[0], as_set(best[1]), best_c[0], as_set(best_c[1])


def cheeger_exact(graph: Graph, max_nodes: int = CHEEGER_MAX_NODES) -> CheegerReport:
    _require_connected(graph)
    if graph.num_nodes > max_nodes:
        raise TooLarge(f"brute-force Cheeger is limited to {max_nodes} nodes, graph has {graph.num_nodes}")
    lower, upper = cheeger_bounds(graph)
    h, S, phi, Sc = _cut_ratios(graph)
    return CheegerReport(lower, upper, normalized_lambda_2(graph), h, S, phi, Sc)


def cheeger_report(graph: Graph, max_nodes: int = CHEEGER_MAX_NODES) -> CheegerReport:
    """Exact values under the size guard, bounds only above it."""
    if graph.num_nodes <= max_nodes:
        return cheeger_exact(graph, max_nodes)
    lower, upper = cheeger_bounds(graph)
    return CheegerReport(lower, upper, normalized_lambda_2(graph))


def stationary_distribution(graph: Graph) -> np.ndarray:
    """``deg(v) / 2|E|``."""
    if graph.num_edges == 0:
        raise DisconnectedGraph("graph has no edges")
    deg = graph.degrees()
    return deg / deg.sum()


@dataclass
class MixingBound:
    value: float
    cheeger: float
    min_stationary: float
    measure: str
    exact: bool


def mixing_bound_details(
    graph: Graph,
    measure: Literal["expansion", "conductance"] = "expansion",
    max_nodes: int = CHEEGER_MAX_NODES,
) -> MixingBound:
    _require_connected(graph)
    pi = stationary_distribution(graph)
    report = cheeger_report(graph, max_nodes)
    if report.exact_h is not None:
        h = report.exact_h if measure == "expansion" else report.exact_conductance
        exact = True
    else:
        h = report.lower_bound
        exact = False
    pmin = float(pi.min())
    return MixingBound(math.log(1.0 / pmin) / h ** 2, h, pmin, measure, exact)


def mixing_bound(graph: Graph, measure: Literal["expansion", "conductance"] = "expansion") -> float:
    """``log(1 / min_v pi_v) / h^2``, an order-of-magnitude value with the
    unknown constant dropped. Falls back to the spectral lower bound on ``h``
    above the brute-force guard (see :func:`mixing_bound_details`)."""
    return mixing_bound_details(graph, measure).value


@dataclass
class OversmoothingCurve:
    steps: list[int]
    operator_distance: list[float]
    signal_distance: Optional[list[float]] = None
    step_change: list[float] = field(default_factory=list)
    decay_rate: float = 0.0
    converges: bool = True
    period_two: bool = False
    bipartite: Optional[bool] = None

    @property
    def annotation(self) -> str:
        if self.converges:
            return "convergent"
        if self.bipartite:
            return "non-convergent (bipartite)"
        return "non-convergent"

    def to_records(self) -> list[dict]:
        out = []
        for i, l in enumerate(self.steps):
            rec = {"l": l, "dist": self.operator_distance[i]}
            if self.signal_distance is not None:
                rec["signal_dist"] = self.signal_distance[i]
            out.append(rec)
        return out


def oversmoothing_curve(
    op: DiffusionOperator,
    lap: SheafLaplacian,
    X: Optional[np.ndarray] = None,
    L_max: int = 30,
    graph: Optional[Graph] = None,
) -> OversmoothingCurve:
    """Distances ``||D^l - P||_F`` (and ``||D^l X - P X||_F``) for ``l = 0 .. L_max``.

    ``P`` projects onto the kernel of ``lap``; a normalized operator is
    paired with the normalized Laplacian automatically. The decay rate is the
    spectral radius of ``D`` off the harmonic space, so an eigenvalue ``-1``
    gives rate 1 and a non-convergent curve.
    """
    if L_max < 1:
        raise ValueError("L_max must be >= 1")
    if op.kind == "normalized" and not lap.normalized:
        lap = normalized_laplacian(lap)
    P = harmonic_projection(lap)
    D = op.matrix
    n = D.shape[0]
    Dl = np.eye(n)
    powers = [Dl]
    for _ in range(L_max + 2):
        Dl = Dl @ D
        powers.append(Dl)
    op_dist = [float(np.linalg.norm(powers[l] - P)) for l in range(L_max + 1)]
    sig_dist = None
    if X is not None:
        X = np.asarray(X, float).reshape(n, -1)
        PX = P @ X
        sig_dist = [float(np.linalg.norm(powers[l] @ X - PX)) for l in range(L_max + 1)]
    change = [float(np.linalg.norm(powers[l + 1] - powers[l])) for l in range(L_max + 1)]
    two_step = [float(np.linalg.norm(powers[l + 2] - powers[l])) for l in range(L_max + 1)]
    rate = float(np.abs(np.linalg.eigvals(D @ (np.eye(n) - P))).max(initial=0.0))
    converges = rate < 1 - 1e-9
    scale = max(change[-1], 1e-300)
    period_two = (not converges) and change[-1] > 1e-6 and two_step[-1] < 1e-8 * max(scale, 1.0)
    return OversmoothingCurve(
        steps=list(range(L_max + 1)),
        operator_distance=op_dist,
        signal_distance=sig_dist,
        step_change=change,
        decay_rate=rate,
        converges=converges,
        period_two=period_two,
        bipartite=None if graph is None else graph.is_bipartite(),
    )


def fit_decay_slope(values: list[float], start: int, stop: int) -> float:
    """Least-squares slope of ``log(values[l])`` for ``l`` in ``[start, stop)``."""
    ls = np.arange(start, stop)
    y = np.log(np.asarray(values, float)[start:stop])
    return float(np.polyfit(ls, y, 1)[0])


def harmonic_component(lap: SheafLaplacian, x: np.ndarray) -> float:
    """Norm of the projection of ``x`` onto the kernel of ``lap``."""
    return float(np.linalg.norm(harmonic_projection(lap) @ np.asarray(x, float)))


def random_walk_kernel(lap: SheafLaplacian, alpha: float = 1.0, l: int = 1) -> np.ndarray:
    """``(alpha I - L_norm)^l``."""
    if l < 0:
        raise ValueError("l must be nonnegative")
    Ln = normalized_laplacian(lap).matrix
    return np.linalg.matrix_power(alpha * np.eye(Ln.shape[0]) - Ln, l)


@dataclass
class MaskStats:
    layer: int
    mean: float
    min: float
    max: float
    masked_fraction: float


def path_masks(kernels: ActivationKernels) -> list[np.ndarray]:
    """``Pi_l`` for ``l = 1 .. L``, the products ``Hdot_l * ... * Hdot_L``."""
    L = kernels.num_layers
    out = []
    acc = None
    for l in range(L, 0, -1):
        acc = kernels.hdot(l) if acc is None else acc * kernels.hdot(l)
        out.append(acc)
    return out[::-1]


def path_mask_stats(kernels: ActivationKernels, threshold: float = MASK_THRESHOLD) -> list[MaskStats]:
    return [
        MaskStats(l, float(P.mean()), float(P.min()), float(P.max()), float((P < threshold).mean()))
        for l, P in enumerate(path_masks(kernels), start=1)
    ]


def diagnostic_report(
    graph: Graph,
    op: DiffusionOperator,
    lap: SheafLaplacian,
    X: Optional[np.ndarray] = None,
    L_max: int = 30,
    kernels: Optional[ActivationKernels] = None,
    max_nodes: int = CHEEGER_MAX_NODES,
) -> tuple[dict, list[str]]:
    """JSON-ready report and a list of warnings."""
    warnings = []
    report: dict = {}
    if graph.num_nodes >= 2 and graph.is_connected():
        cheeger = cheeger_report(graph, max_nodes)
        c = cheeger.to_dict()
        if cheeger.exact_h is None:
            warnings.append(f"graph has {graph.num_nodes} > {max_nodes} nodes; exact Cheeger constant omitted")
            c = {k: v for k, v in c.items() if v is not None}
        else:
            c["exact"] = cheeger.exact_h
        report["cheeger"] = c
        mb = mixing_bound_details(graph, max_nodes=max_nodes)
        report["mixing_bound"] = mb.value
        report["mixing_bound_exact_cheeger"] = mb.exact
    else:
        warnings.append("graph is disconnected; Cheeger and mixing sections omitted")
    curve = oversmoothing_curve(op, lap, X, L_max, graph)
    report["oversmoothing"] = curve.to_records()
    report["oversmoothing_status"] = curve.annotation
    report["decay_rate"] = curve.decay_rate
    report["period_two"] = curve.period_two
    if kernels is not None:
        report["mask_stats"] = [asdict(m) for m in path_mask_stats(kernels)]
    return report, warnings
