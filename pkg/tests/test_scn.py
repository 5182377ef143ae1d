import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sheafntk.errors import ShapeMismatch
from sheafntk.ntk import ntk_exact, ntk_linear, relative_frobenius
from sheafntk.scn import (
    ScnConfig,
    ScnParams,
    empirical_ntk,
    empirical_ntk_from_jacobians,
    forward,
    init_params,
    param_gradient,
    readout,
    readout_gradient,
)
from sheafntk.sheaf import constant_sheaf, diffusion_operator, laplacian_of, random_sheaf

from conftest import K2, PAW, cycle, random_graph


def op(sheaf, kind="normalized"):
    return diffusion_operator(laplacian_of(sheaf), kind)


def finite_difference(params, D, X, cfg, h=1e-4):
    """Central differences of every output coordinate w.r.t. every weight,
    plus a mask of the weights whose perturbation flipped a ReLU pattern."""
    base = forward(params, D, X, cfg)
    signs = [np.sign(f) for f in base.preactivations]
    cols, clean = [], []
    for li, W in enumerate(params.weights):
        for idx in np.ndindex(W.shape):
            step = h * max(1.0, abs(W[idx]))
            outs, ok = [], True
            for s in (step, -step):
                Ws = [w.copy() for w in params.weights]
                Ws[li][idx] += s
                fp = forward(ScnParams(tuple(Ws), params.B), D, X, cfg)
                ok &= all(np.array_equal(np.sign(f), g) for f, g in zip(fp.preactivations, signs))
                outs.append(fp.output.ravel())
            cols.append((outs[0] - outs[1]) / (2 * step))
            clean.append(ok)
    return np.stack(cols, axis=1), np.array(clean)


class TestConfig:
    def test_layers(self):
        cfg = ScnConfig((3, 8, 8))
        assert cfg.num_layers == 2
        assert cfg.layer_shapes == [(3, 8), (8, 8)]
        assert cfg.scales() == pytest.approx([1.0, 1 / np.sqrt(8)])

    def test_for_kernel_has_linear_head(self):
        cfg = ScnConfig.for_kernel(2, 16, 3)
        assert cfg.layer_shapes[-1] == (16, 1)
        assert cfg.activations() == ["relu"] * 3 + ["identity"]

    @pytest.mark.parametrize("bad", [dict(widths=(3,)), dict(widths=(3, 0)), dict(widths=(2, 2), activation="tanh")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            ScnConfig(**bad)


class TestInit:
    def test_deterministic(self):
        cfg = ScnConfig((4, 16, 8))
        a, b = init_params(cfg, 3), init_params(cfg, 3)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
        c = init_params(cfg, 4)
        assert not np.array_equal(a.weights[0], c.weights[0])

    def test_standard_normal_moments(self):
        W = init_params(ScnConfig((1000, 1000)), 0).weights[0]
        assert abs(W.mean()) < 0.01
        assert abs(W.var() - 1) < 0.01


class TestForward:
    def test_identity_weights_pure_diffusion(self, rng):
        s = random_sheaf(cycle(4), 2, rng)
        D = op(s)
        X = rng.standard_normal((8, 3))
        cfg = ScnConfig((3, 3, 3, 3), activation="identity", ntk_scaling=False)
        params = ScnParams(tuple(np.eye(3) for _ in range(3)))
        out = forward(params, D, X, cfg).output
        assert np.allclose(out, np.linalg.matrix_power(D.matrix, 3) @ X, atol=1e-12)

    def test_relu_zero_input(self):
        cfg = ScnConfig((2, 5, 5))
        out = forward(init_params(cfg, 0), op(constant_sheaf(PAW)), np.zeros((4, 2)), cfg).output
        assert not out.any()

    def test_single_edge_by_hand(self):
        cfg = ScnConfig((1, 1))
        params = ScnParams((np.array([[-0.5]]),))
        X = np.array([[1.0], [-2.0]])
        # D swaps the two nodes: D X = [-2, 1]; times -0.5 gives [1, -0.5]
        out = forward(params, op(constant_sheaf(K2)), X, cfg).output
        assert np.allclose(out, [[1.0], [0.0]], atol=1e-15)

    def test_linear_collapse(self, rng):
        D = op(random_sheaf(PAW, 2, rng))
        X = rng.standard_normal((8, 3))
        cfg = ScnConfig((3, 5, 4, 2), activation="identity")
        p = init_params(cfg, 1)
        want = np.linalg.matrix_power(D.matrix, 3) @ X @ p.weights[0] @ p.weights[1] @ p.weights[2]
        want /= np.sqrt(5 * 4)
        assert np.allclose(forward(p, D, X, cfg).output, want, atol=1e-10)

    def test_B_absorption(self, rng):
        D = op(random_sheaf(cycle(3), 2, rng))
        B = rng.standard_normal((2, 2))
        X = rng.standard_normal((6, 2))
        cfg = ScnConfig((2, 3), activation="identity")
        p = init_params(cfg, 0, B=B)
        want = D.matrix @ np.kron(np.eye(3), B) @ X @ p.weights[0]
        assert np.allclose(forward(p, D, X, cfg).output, want)

    def test_shape_mismatch(self):
        cfg = ScnConfig((3, 4))
        with pytest.raises(ShapeMismatch):
            forward(init_params(cfg, 0), op(constant_sheaf(K2)), np.ones((2, 2)), cfg)
        with pytest.raises(ShapeMismatch):
            forward(init_params(cfg, 0), op(constant_sheaf(K2)), np.ones((3, 3)), cfg)


class TestReadout:
    def test_sum(self):
        assert readout(np.ones((3, 2))) == 6.0

    def test_per_node(self):
        X = np.arange(6.0).reshape(3, 2)
        out = readout(X, "per_node")
        assert np.array_equal(out, X) and out is not X

    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_linear(self, a, b):
        rng = np.random.default_rng(0)
        X, Y = rng.standard_normal((2, 4, 3))
        assert readout(a * X + b * Y) == pytest.approx(a * readout(X) + b * readout(Y), abs=1e-9)


class TestGradient:
    def test_linear_single_layer(self, rng):
        D = op(constant_sheaf(PAW))
        X = rng.standard_normal((4, 3))
        cfg = ScnConfig((3, 2), activation="identity")
        g = readout_gradient(init_params(cfg, 0), D, X, cfg)
        # d sum(D X W) / dW_ij = sum_b (D X)_bi
        want = np.outer((D.matrix @ X).sum(axis=0), np.ones(2)).ravel()
        assert np.allclose(g, want, atol=1e-12)

    def test_zero_input_zero_gradient(self):
        cfg = ScnConfig((2, 4, 3))
        J = param_gradient(init_params(cfg, 0), op(constant_sheaf(PAW)), np.zeros((4, 2)), cfg)
        assert not J.any()

    @pytest.mark.parametrize("act, tol", [("identity", 1e-5), ("relu", 1e-4)])
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences(self, act, tol, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 5, 0.5)
        k = int(rng.integers(1, 3))
        D = op(random_sheaf(g, k, rng), "alpha_scaled")
        X = rng.standard_normal((5 * k, 3))
        cfg = ScnConfig((3, 6, 4), activation=act, linear_head=bool(seed % 2), head_width=2)
        p = init_params(cfg, seed)
        J = param_gradient(p, D, X, cfg)
        F, clean = finite_difference(p, D, X, cfg)
        assert J.shape == F.shape
        scale = np.abs(J).max()
        err = np.abs(J - F)[:, clean] / np.maximum(np.abs(F[:, clean]), 1e-6 * scale)
        assert clean.mean() > 0.5
        assert err.max() < tol


class TestEmpiricalNtk:
    def test_factorised_matches_jacobians(self, rng):
        D = op(random_sheaf(PAW, 2, rng))
        X, X2 = rng.standard_normal((2, 8, 3))
        cfg = ScnConfig((3, 5, 4), head_width=1)
        p = init_params(cfg, 11)
        J, J2 = param_gradient(p, D, X, cfg), param_gradient(p, D, X2, cfg)
        want = empirical_ntk_from_jacobians(J, J2, cfg.output_width)
        got = empirical_ntk(cfg, D, D, X, X2, 1, 11)
        assert np.allclose(got, want, atol=1e-10 * np.abs(want).max())

    def test_identity_width_one(self, rng):
        D = op(constant_sheaf(cycle(4)))
        X = rng.standard_normal((4, 1))
        cfg = ScnConfig((1, 1), activation="identity")
        J = param_gradient(init_params(cfg, 5), D, X, cfg)
        assert np.allclose(empirical_ntk(cfg, D, D, X, X, 1, 5), J @ J.T, atol=1e-14)

    def test_symmetric(self, rng):
        D = op(random_sheaf(cycle(5), 1, rng))
        X = rng.standard_normal((5, 2))
        theta = empirical_ntk(ScnConfig.for_kernel(2, 32, 2), D, D, X, X, 3, 0)
        assert np.abs(theta - theta.T).max() < 1e-10

    def test_linear_network_expectation(self, rng):
        # identity activation: the wide-limit kernel is the sandwich recursion
        D = op(constant_sheaf(PAW), "alpha_scaled")
        X = rng.standard_normal((4, 2))
        cfg = ScnConfig.for_kernel(2, 512, 2, "identity")
        emp = empirical_ntk(cfg, D, D, X, X, 8, 0)
        assert relative_frobenius(emp, ntk_exact(D, D, X, X, 2, "identity").theta) < 0.1

    def test_standard_error_shrinks_by_root_two(self, rng):
        D = op(constant_sheaf(PAW))
        X = rng.standard_normal((4, 2))
        cfg = ScnConfig.for_kernel(2, 4, 1)
        _, s1 = empirical_ntk(cfg, D, D, X, X, 200, 0, return_samples=True)
        _, s2 = empirical_ntk(cfg, D, D, X, X, 400, 10_000, return_samples=True)
        se1 = np.linalg.norm(s1.std(axis=0, ddof=1)) / np.sqrt(200)
        se2 = np.linalg.norm(s2.std(axis=0, ddof=1)) / np.sqrt(400)
        assert se2 / se1 == pytest.approx(1 / np.sqrt(2), rel=0.2)

    def test_width_mismatch(self, rng):
        D = op(constant_sheaf(K2))
        with pytest.raises(ShapeMismatch):
            empirical_ntk(ScnConfig((2, 3)), D, D, np.ones((2, 2)), np.ones((2, 3)), 1, 0)
