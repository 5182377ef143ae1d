"""Finite-width sheaf convolutional networks and their empirical tangent kernel.

Layer ``l`` computes ``f_l = c_l * D (I (x) B) g_{l-1} W_l`` and
``g_l = sigma(f_l)`` with ``g_0 = X``. Under ``ntk_scaling`` the factor
``c_l`` is ``1/sqrt(d_{l-1})`` for every layer after the first, and 1 for the
input layer so that the input covariance stays ``X X'^T``. An optional
linear head ``D g_L W_{L+1}`` (no activation) can be appended; it is the
layer that produces the last term of the layer-summed analytic kernel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import ShapeMismatch
from .sheaf import DiffusionOperator

Readout = Literal["sum_aggregation", "per_node"]


@dataclass(frozen=True)
class ScnConfig:
    widths: tuple[int, ...]
    activation: str = "relu"
    readout: Readout = "sum_aggregation"
    ntk_scaling: bool = True
    linear_head: bool = False
    head_width: int = 1

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"need at least two positive widths, got {self.widths}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.readout not in ("sum_aggregation", "per_node"):
            raise ValueError(f"unknown readout {self.readout!r}")
        object.__setattr__(self, "widths", widths)

    @property
    def num_layers(self) -> int:
        """Number of activated convolutional layers (the head is not counted)."""
        return len(self.widths) - 1

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        shapes = list(zip(self.widths[:-1], self.widths[1:]))
        if self.linear_head:
            shapes.append((self.widths[-1], self.head_width))
        return shapes

    @property
    def output_width(self) -> int:
        return self.head_width if self.linear_head else self.widths[-1]

    def scales(self) -> list[float]:
        shapes = self.layer_shapes
        if not self.ntk_scaling:
            return [1.0] * len(shapes)
        return [1.0] + [1.0 / np.sqrt(d_in) for d_in, _ in shapes[1:]]

    def activations(self) -> list[str]:
        acts = [self.activation] * self.num_layers
        return acts + ["identity"] if self.linear_head else acts

    @classmethod
    def for_kernel(cls, d_in: int, width: int, L: int, activation: str = "relu") -> "ScnConfig":
        """The network whose wide limit matches the depth-``L`` analytic kernels."""
        return cls((d_in,) + (width,) * L, activation=activation, linear_head=True)


@dataclass(frozen=True)
class ScnParams:
    weights: tuple[np.ndarray, ...]
    B: Optional[np.ndarray] = None


def init_params(config: ScnConfig, seed: int, B: Optional[np.ndarray] = None) -> ScnParams:
    """Draw every weight i.i.d. ``N(0, 1)`` from ``default_rng(seed)``, layer by layer."""
    rng = np.random.default_rng(seed)
    return ScnParams(tuple(rng.standard_normal(s) for s in config.layer_shapes), B)


def _operator(params: ScnParams, diffusion) -> np.ndarray:
    M = diffusion.matrix if isinstance(diffusion, DiffusionOperator) else np.asarray(diffusion, float)
    if params.B is not None:
        B = np.asarray(params.B, float)
        k = B.shape[0]
        if M.shape[0] % k:
            raise ShapeMismatch(f"B of size {k} does not tile operator of size {M.shape[0]}")
        M = M @ np.kron(np.eye(M.shape[0] // k), B)
    return M


def _act(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else z


def _dact(name: str, z: np.ndarray) -> np.ndarray:
    # relu'(0) = 0
    return (z > 0).astype(float) if name == "relu" else np.ones_like(z)


@dataclass(frozen=True)
class ForwardPass:
    output: np.ndarray
    preactivations: tuple[np.ndarray, ...]
    # D g_{l-1}, i.e. the diffused input of each layer before W_l
    diffused_inputs: tuple[np.ndarray, ...]


def _check(params: ScnParams, M: np.ndarray, X: np.ndarray, config: ScnConfig):
    shapes = config.layer_shapes
    if len(params.weights) != len(shapes):
        raise ShapeMismatch(f"expected {len(shapes)} weight matrices, got {len(params.weights)}")
    for i, (W, s) in enumerate(zip(params.weights, shapes)):
        if W.shape != s:
            raise ShapeMismatch(f"W_{i + 1} has shape {W.shape}, expected {s}")
    if X.ndim != 2 or X.shape[1] != config.widths[0]:
        raise ShapeMismatch(f"signal has shape {X.shape}, expected (*, {config.widths[0]})")
    if M.shape != (X.shape[0], X.shape[0]):
        raise ShapeMismatch(f"operator {M.shape} incompatible with {X.shape[0]} signal rows")


def forward(params: ScnParams, diffusion, X: np.ndarray, config: ScnConfig) -> ForwardPass:
    X = np.asarray(X, float)
    M = _operator(params, diffusion)
    _check(params, M, X, config)
    g = X
    pre, diffused = [], []
    for W, c, act in zip(params.weights, config.scales(), config.activations()):
        Dg = M @ g
        f = c * (Dg @ W)
        diffused.append(Dg)
        pre.append(f)
        g = _act(act, f)
    return ForwardPass(g, tuple(pre), tuple(diffused))


def readout(X_L: np.ndarray, kind: Readout = "sum_aggregation"):
    if kind == "sum_aggregation":
        return float(np.asarray(X_L).sum())
    if kind == "per_node":
        return np.array(X_L, dtype=float, copy=True)
    raise ValueError(f"unknown readout {kind!r}")


def _backprop(params: ScnParams, M: np.ndarray, fp: ForwardPass, config: ScnConfig):
    """Sensitivities ``P_l[o] = d y_o / d f_l`` for every output coordinate ``o``.

    Returns a list indexed like the layers, each of shape ``(n_out, n, d_l)``.
    """
    acts = config.activations()
    scales = config.scales()
    f_last = fp.preactivations[-1]
    n, d_out = f_last.shape
    P = np.zeros((n * d_out, n, d_out))
    idx = np.arange(n * d_out)
    P[idx, idx // d_out, idx % d_out] = _dact(acts[-1], f_last).ravel()
    sens = [P]
    for l in range(len(params.weights) - 1, 0, -1):
        W = params.weights[l]
        back = scales[l] * np.einsum("cb,oci,ji->obj", M, P, W, optimize=True)
        P = back * _dact(acts[l - 1], fp.preactivations[l - 1])[None]
        sens.append(P)
    return sens[::-1]


def param_gradient(params: ScnParams, diffusion, X: np.ndarray, config: ScnConfig) -> np.ndarray:
    """Jacobian of the network output w.r.t. all weights.

    Row ``a * d_out + o`` holds ``d y[a, o] / d theta`` with the weight
    matrices flattened row-major and concatenated in layer order.
    """
    M = _operator(params, diffusion)
    fp = forward(params, diffusion, X, config)
    sens = _backprop(params, M, fp, config)
    blocks = [
        c * np.einsum("bj,obi->oji", Dg, P).reshape(P.shape[0], -1)
        for c, Dg, P in zip(config.scales(), fp.diffused_inputs, sens)
    ]
    return np.concatenate(blocks, axis=1)


def readout_gradient(params: ScnParams, diffusion, X: np.ndarray, config: ScnConfig) -> np.ndarray:
    """Gradient of the sum readout (all output coordinates summed)."""
    return param_gradient(params, diffusion, X, config).sum(axis=0)


def _sample_kernel(params, M, M2, X, X2, config):
    fa = forward(params, M, X, config)
    fb = forward(params, M2, X2, config)
    Pa = _backprop(params, M, fa, config)
    Pb = _backprop(params, M2, fb, config)
    theta = 0.0
    for c, Ga, Gb, pa, pb in zip(config.scales(), fa.diffused_inputs, fb.diffused_inputs, Pa, Pb):
        G = c * c * (Ga @ Gb.T)
        theta = theta + np.einsum("obi,bc,pci->op", pa, G, pb, optimize=True)
    n, m, d = X.shape[0], X2.shape[0], config.output_width
    # average the same-channel pairs down to a node-row kernel
    return np.einsum("aobo->ab", theta.reshape(n, d, m, d)) / d


def empirical_ntk(
    config: ScnConfig,
    diffusion,
    diffusion2,
    X: np.ndarray,
    X2: np.ndarray,
    num_samples: int,
    seed: int,
    B: Optional[np.ndarray] = None,
    return_samples: bool = False,
):
    """Average of ``<dy/dW, dy'/dW>`` over ``num_samples`` initialisations.

    Sample ``s`` uses ``init_params(config, seed + s)``. Returns the
    ``(rows(X), rows(X2))`` kernel, plus the per-sample stack when
    ``return_samples``.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    X = np.asarray(X, float)
    X2 = np.asarray(X2, float)
    if X.shape[1] != X2.shape[1]:
        raise ShapeMismatch("both signals must have the same channel count")
    samples = []
    for s in range(num_samples):
        params = init_params(config, seed + s, B)
        M = _operator(params, diffusion)
        M2 = _operator(params, diffusion2)
        _check(params, M, X, config)
        _check(params, M2, X2, config)
        samples.append(_sample_kernel(params, M, M2, X, X2, config))
    stack = np.stack(samples)
    mean = stack.sum(axis=0) / num_samples
    return (mean, stack) if return_samples else mean


def empirical_ntk_from_jacobians(J: np.ndarray, J2: np.ndarray, d_out: int) -> np.ndarray:
    """Node-row kernel from explicit Jacobians; used to check the factorised path."""
    T = J @ J2.T
    n, m = J.shape[0] // d_out, J2.shape[0] // d_out
    return np.einsum("aobo->ab", T.reshape(n, d_out, m, d_out)) / d_out


__all__: Sequence[str] = [
    "ForwardPass",
    "ScnConfig",
    "ScnParams",
    "empirical_ntk",
    "forward",
    "init_params",
    "param_gradient",
    "readout",
    "readout_gradient",
]
