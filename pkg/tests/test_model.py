import numpy as np
import pytest

from resfolio.errors import ConfigError
from resfolio.net import (
    Network,
    NetworkSpec,
    default_taus,
    homogenize,
    multi_quantile_grad,
    multi_quantile_loss,
    network_from_dict,
    network_to_dict,
)
from test_layers import max_rel_err, numeric_grad


def small_spec(**overrides):
    kw = dict(
        input_len=12,
        psi1_hidden=(8,),
        psi2_hidden=(8,),
        K=8,
        Q=8,
        Hp=6,
        taus=(1.0, 0.7, 0.4),
        dropout_rate=0.0,
        homogeneous=True,
        arch="fractal",
        mlp_hidden=(10,),
    )
    kw.update(overrides)
    return NetworkSpec(**kw)


class TestNetworkSpec:
    def test_default_tau_grid(self):
        taus = default_taus()
        assert len(taus) == 22
        assert taus[0] == 1.0
        assert taus[1] == pytest.approx(4.0 ** (-1 / 20))
        assert all(a > b for a, b in zip(taus, taus[1:]))

    def test_validation_collects_problems(self):
        with pytest.raises(ConfigError) as err:
            NetworkSpec(input_len=8, Q=1, Hp=1, taus=(0.5, 1.0))
        msg = str(err.value)
        assert "Q" in msg and "Hp" in msg and "taus" in msg

    def test_hp_cannot_exceed_window(self):
        with pytest.raises(ConfigError, match="Hp"):
            small_spec(Hp=13)


class TestHomogenize:
    def test_zero_maps_to_zero(self):
        psi = homogenize(lambda u: np.array([1.0, 2.0]))
        np.testing.assert_array_equal(psi(np.zeros(4)), [0.0, 0.0])

    def test_scaling(self):
        rng = np.random.default_rng(0)
        W = rng.standard_normal((5, 3))
        psi = homogenize(lambda u: np.tanh(u) @ W)
        x = rng.standard_normal(5)
        for a in (0.1, 1.0, 10.0):
            np.testing.assert_allclose(psi(a * x), a * psi(x), rtol=1e-6)

    def test_identity_on_unit_sphere(self):
        rng = np.random.default_rng(1)
        fn = lambda u: np.array([u.sum(), (u ** 2).sum()])
        psi = homogenize(fn)
        u = rng.standard_normal(6)
        u /= np.linalg.norm(u)
        np.testing.assert_allclose(psi(u), fn(u), rtol=1e-12)


class TestFractalNetwork:
    def test_linear_configuration_matches_matrix_product(self):
        # single scale tau=1 at full length, no hidden layers, no batch norm:
        # the whole core is the product of its two weight matrices
        spec = small_spec(
            taus=(1.0,), Hp=12, psi1_hidden=(), psi2_hidden=(), batch_norm=False,
            homogeneous=False,
        )
        net = Network(spec, seed=3)
        W1 = net.core.psi1.layers[0].W
        b1 = net.core.psi1.layers[0].b
        W2 = net.core.psi2.layers[0].W
        b2 = net.core.psi2.layers[0].b
        x = np.random.default_rng(4).standard_normal((5, 12))
        expected = (x @ W1 + b1) @ W2 + b2
        np.testing.assert_allclose(net.forward(x), expected, atol=1e-12)

    def test_homogeneity_across_scales(self):
        net = Network(small_spec(), seed=5)
        rng = np.random.default_rng(6)
        x = rng.standard_normal(12)
        base = net.forward(x)
        for a in (1e-2, 0.1, 1.0, 10.0, 1e2):
            out = net.forward(a * x)
            assert np.linalg.norm(out - a * base) <= 1e-5 * max(np.linalg.norm(a * base), 1e-12)

    def test_zero_input_zero_output(self):
        net = Network(small_spec(), seed=7)
        np.testing.assert_array_equal(net.forward(np.zeros(12)), np.zeros(7))

    def test_batch_with_zero_row(self):
        net = Network(small_spec(), seed=8)
        X = np.random.default_rng(9).standard_normal((4, 12))
        X[2] = 0.0
        out = net.forward(X)
        np.testing.assert_array_equal(out[2], np.zeros(7))
        np.testing.assert_allclose(out[[0, 1, 3]], net.forward(X[[0, 1, 3]]), atol=1e-12)

    def test_train_mode_deterministic_under_seed(self):
        spec = small_spec(dropout_rate=0.5)
        x = np.random.default_rng(10).standard_normal((6, 12))
        outs = [Network(spec, seed=11).forward(x, train=True) for _ in range(2)]
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_full_network_gradients(self):
        # dropout off, batch norm on eval statistics, quantile loss away from kinks
        spec = small_spec(dropout_rate=0.0)
        net = Network(spec, seed=12)
        rng = np.random.default_rng(13)
        x = rng.standard_normal((4, 12))
        net.forward(x, train=True)  # populate batch-norm running statistics
        y = rng.standard_normal(4)
        out = net.forward(x, train=False)
        gap = np.min(np.abs(y[:, None] - out), axis=1)
        y = np.where(gap < 1e-3, y + 0.01, y)
        assert np.min(np.abs(y[:, None] - out)) > 1e-3

        def loss():
            return multi_quantile_loss(y, net.forward(x, train=False), spec.Q)

        loss()
        net.backward(multi_quantile_grad(y, net.forward(x, train=False), spec.Q))
        gx = net.backward(multi_quantile_grad(y, net.forward(x, train=False), spec.Q))
        assert max_rel_err(gx, numeric_grad(loss, x)) <= 1e-4
        analytic = {k: v.copy() for k, v in net.grads().items()}
        for name, param in net.params().items():
            assert max_rel_err(analytic[name], numeric_grad(loss, param)) <= 1e-4, name


class TestMLPNetwork:
    def test_zero_depth_is_affine(self):
        spec = small_spec(arch="mlp", mlp_hidden=(), homogeneous=False, batch_norm=False)
        net = Network(spec, seed=14)
        dense = net.core.mlp.layers[0]
        x = np.random.default_rng(15).standard_normal((3, 12))
        np.testing.assert_allclose(net.forward(x), x @ dense.W + dense.b, atol=1e-12)

    def test_deterministic_when_noise_free(self):
        spec = small_spec(arch="mlp", dropout_rate=0.0, batch_norm=False, homogeneous=False)
        net = Network(spec, seed=16)
        x = np.random.default_rng(17).standard_normal((4, 12))
        np.testing.assert_array_equal(net.forward(x, train=True), net.forward(x, train=True))


class TestCheckpoint:
    def test_roundtrip_bitwise(self):
        spec = small_spec(dropout_rate=0.5)
        net = Network(spec, seed=18)
        x = np.random.default_rng(19).standard_normal((5, 12))
        net.forward(x, train=True)  # move the running stats off their defaults
        blob = network_to_dict(net, metadata={"note": "test"})
        clone = network_from_dict(blob)
        for name, arr in net.state().items():
            np.testing.assert_array_equal(arr, clone.state()[name])
        np.testing.assert_array_equal(net.forward(x), clone.forward(x))
