import numpy as np
import pytest
from scipy.special import ndtri

from resfolio.data import ReturnPanel, synthetic_dates, synthetic_symbols
from resfolio.errors import ConfigError
from resfolio.forecast import (
    QuantileForecast,
    TrainConfig,
    build_dataset,
    predict,
    train,
)
from resfolio.net import NetworkSpec, quantile_grid


def _panel(values):
    values = np.asarray(values, dtype=float)
    T, S = values.shape
    return ReturnPanel(synthetic_dates(T), synthetic_symbols(S), values)


def tiny_spec(H, **overrides):
    kw = dict(
        input_len=H,
        psi1_hidden=(12,),
        psi2_hidden=(12,),
        K=12,
        Q=8,
        Hp=min(6, H),
        taus=(1.0, 0.7, 0.4),
        dropout_rate=0.0,
        homogeneous=True,
    )
    kw.update(overrides)
    return NetworkSpec(**kw)


class TestBuildDataset:
    def test_minimum_panel_gives_one_sample_per_asset(self):
        H, S = 6, 4
        ds = build_dataset(_panel(np.random.default_rng(0).standard_normal((H + 1, S))), H)
        assert len(ds) == S
        assert set(ds.date_index) == {H}

    def test_sample_count(self):
        H, S, extra = 8, 3, 5
        ds = build_dataset(_panel(np.random.default_rng(1).standard_normal((H + extra, S))), H)
        assert len(ds) == S * extra

    def test_split_boundary_excludes_targets(self):
        H = 4
        panel = _panel(np.random.default_rng(2).standard_normal((20, 2)))
        split = panel.dates[12]
        ds = build_dataset(panel, H, stop=split)
        assert ds.date_index.max() == 11
        ds_test = build_dataset(panel, H, start=split)
        assert ds_test.date_index.min() == 12

    def test_windows_precede_targets(self):
        H = 5
        values = np.arange(40, dtype=float).reshape(20, 2)
        ds = build_dataset(_panel(values), H)
        k = 7  # arbitrary sample
        t, a = ds.date_index[k], ds.asset_index[k]
        np.testing.assert_array_equal(ds.X[k], values[t - H:t, a])
        assert ds.y[k] == values[t, a]

    def test_empty_split_is_config_error(self):
        panel = _panel(np.random.default_rng(3).standard_normal((12, 2)))
        with pytest.raises(ConfigError, match="empty split"):
            build_dataset(panel, 4, start="2020-01-01", stop="2020-01-01")


class TestPredictMoments:
    def test_constant_quantiles(self):
        fc = QuantileForecast.from_quantiles("d", np.full((3, 5), 0.7))
        np.testing.assert_allclose(fc.mu_hat, 0.7)
        np.testing.assert_allclose(fc.var_hat, 0.0)
        np.testing.assert_allclose(fc.mad, 0.0)

    def test_three_point_variance(self):
        fc = QuantileForecast.from_quantiles("d", np.array([[-1.0, 0.0, 1.0]]))
        assert fc.mu_hat[0] == pytest.approx(0.0)
        assert fc.var_hat[0] == pytest.approx(2.0 / 3.0)
        assert fc.mad[0] == pytest.approx(1.0)

    def test_normal_quantile_grid_against_oracle(self):
        # independently coded inverse-normal grid and its population variance
        levels = quantile_grid(32)
        q = ndtri(levels)
        fc = QuantileForecast.from_quantiles("d", q[None, :])
        assert abs(fc.mu_hat[0]) < 1e-6
        oracle_var = float(np.sum((q - q.mean()) ** 2) / q.size)
        assert fc.var_hat[0] == pytest.approx(oracle_var, rel=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        q = rng.standard_normal(9)
        a = QuantileForecast.from_quantiles("d", q[None, :])
        b = QuantileForecast.from_quantiles("d", rng.permutation(q)[None, :])
        assert a.mu_hat[0] == pytest.approx(b.mu_hat[0])
        assert a.var_hat[0] == pytest.approx(b.var_hat[0])
        assert a.mad[0] == pytest.approx(b.mad[0])

    def test_moment_consistency_with_stored_quantiles(self):
        rng = np.random.default_rng(5)
        fc = QuantileForecast.from_quantiles("d", rng.standard_normal((6, 7)))
        np.testing.assert_array_equal(fc.mu_hat, fc.quantiles.mean(axis=1))
        np.testing.assert_array_equal(fc.var_hat, fc.quantiles.var(axis=1))

    def test_crossing_rate_of_sorted_rows(self):
        fc = QuantileForecast.from_quantiles("d", np.sort(np.random.default_rng(6).standard_normal((4, 6)), axis=1))
        assert fc.crossing_rate() == 0.0


class TestTraining:
    def test_zero_targets_drive_quantiles_to_zero(self):
        rng = np.random.default_rng(7)
        H, S, T = 10, 4, 140
        panel = _panel(rng.standard_normal((T, S)) * 0.02)  # return-scale features
        ds = build_dataset(panel, H)
        ds.y[:] = 0.0
        spec = tiny_spec(H)
        first = train(ds, spec, seed=1, config=TrainConfig(epochs=150, batch_size=128, learning_rate=3e-3))
        final = train(ds, spec, seed=1, config=TrainConfig(epochs=50, batch_size=128, learning_rate=1e-4),
                      initial=first)
        assert final.loss_history[-1][0] < 1e-3
        fc = predict(final, ds.X[:64])
        assert np.max(np.abs(fc.quantiles)) < 0.01

    def test_loss_decreases_and_is_deterministic(self):
        rng = np.random.default_rng(8)
        H, S, T = 8, 3, 120
        panel = _panel(rng.standard_normal((T, S)) * 0.1)
        ds = build_dataset(panel, H)
        cfg = TrainConfig(epochs=5, batch_size=64, learning_rate=1e-3)
        a = train(ds, tiny_spec(H), seed=2, config=cfg)
        b = train(ds, tiny_spec(H), seed=2, config=cfg)
        assert a.loss_history == b.loss_history
        assert a.loss_history[-1][0] < a.loss_history[0][0]
        for name, arr in a.network.state().items():
            np.testing.assert_array_equal(arr, b.network.state()[name])

    def test_iid_targets_recover_unconditional_quantiles(self):
        rng = np.random.default_rng(9)
        H, n = 12, 2000
        X = rng.standard_normal((n, H))
        X *= np.sqrt(H) / np.linalg.norm(X, axis=1, keepdims=True)  # fixed-norm features
        y = rng.exponential(1.0, n) - 1.0  # skewed, mean zero
        from resfolio.forecast import ForecastDataset
        ds = ForecastDataset(X=X, y=y, asset_index=np.zeros(n, dtype=int),
                             date_index=np.arange(n), H=H)
        spec = tiny_spec(H, Q=8)
        warm = train(ds, spec, seed=3, config=TrainConfig(epochs=150, batch_size=256,
                                                          learning_rate=3e-3, val_fraction=0.0))
        done = train(ds, spec, seed=3, config=TrainConfig(epochs=50, batch_size=256,
                                                          learning_rate=1e-4, val_fraction=0.0),
                     initial=warm)
        levels = quantile_grid(8)
        empirical = np.quantile(y, levels, method="inverted_cdf")
        # Monte-Carlo standard error from the known density f(q_a) = 1 - a
        se = np.sqrt(levels * (1 - levels) / n) / (1 - levels)
        fc = predict(done, X[:256])
        pred = fc.quantiles.mean(axis=0)
        assert np.all(np.abs(pred - empirical) <= 3 * se)

    def test_ar1_conditional_mean_tracks_last_lag(self):
        rng = np.random.default_rng(10)
        H, S, T = 12, 8, 1500
        phi, noise = -0.3, 1.0
        eps = np.zeros((T, S))
        for t in range(1, T):
            eps[t] = phi * eps[t - 1] + rng.standard_normal(S) * noise
        panel = _panel(eps)
        split = panel.dates[1200]
        ds = build_dataset(panel, H, stop=split)
        spec = tiny_spec(H, psi1_hidden=(16,), psi2_hidden=(16,), K=16)
        predictor = train(ds, spec, seed=4,
                          config=TrainConfig(epochs=40, batch_size=512, learning_rate=3e-3))
        test = build_dataset(panel, H, start=split)
        fc = predict(predictor, test.X)
        truth = phi * test.X[:, -1]
        r = np.corrcoef(fc.mu_hat, truth)[0, 1]
        assert r > 0.8

    def test_training_never_touches_post_split_rows(self):
        rng = np.random.default_rng(11)
        H, S, T = 6, 3, 80
        values = rng.standard_normal((T, S))
        panel = _panel(values)
        split = panel.dates[60]
        cfg = TrainConfig(epochs=3, batch_size=32, learning_rate=1e-3)
        a = train(build_dataset(panel, H, stop=split), tiny_spec(H), seed=5, config=cfg)
        zeroed = values.copy()
        zeroed[60:] = 0.0
        b = train(build_dataset(_panel(zeroed), H, stop=split), tiny_spec(H), seed=5, config=cfg)
        for name, arr in a.network.state().items():
            np.testing.assert_array_equal(arr, b.network.state()[name])

    def test_homogeneity_passes_through_moments(self):
        rng = np.random.default_rng(12)
        H = 10
        panel = _panel(rng.standard_normal((60, 3)) * 0.05)
        ds = build_dataset(panel, H)
        predictor = train(ds, tiny_spec(H), seed=6,
                          config=TrainConfig(epochs=2, batch_size=64, learning_rate=1e-3))
        W = rng.standard_normal((3, H))
        base = predict(predictor, W)
        scaled = predict(predictor, 3.0 * W)
        np.testing.assert_allclose(scaled.quantiles, 3.0 * base.quantiles, rtol=1e-9)
        np.testing.assert_allclose(scaled.mu_hat, 3.0 * base.mu_hat, rtol=1e-9)
        np.testing.assert_allclose(np.sqrt(scaled.var_hat), 3.0 * np.sqrt(base.var_hat), rtol=1e-6, atol=1e-15)
        np.testing.assert_allclose(scaled.mad, 3.0 * base.mad, rtol=1e-9)

    def test_divergence_raises_training_error(self):
        rng = np.random.default_rng(13)
        H = 4
        panel = _panel(rng.standard_normal((30, 2)) * 1e150)  # overflow-scale inputs
        ds = build_dataset(panel, H)
        from resfolio.errors import TrainingError
        spec = tiny_spec(H, homogeneous=False, batch_norm=False)
        with pytest.raises(TrainingError):
            train(ds, spec, seed=7, config=TrainConfig(epochs=2, batch_size=16, learning_rate=1e3))
