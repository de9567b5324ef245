import numpy as np
import pytest

from resfolio.data import (
    FactorModelSpec,
    PricePanel,
    ReturnPanel,
    compute_returns,
    generate_factor_market,
    load_price_panel,
    panel_from_returns,
    random_factor_spec,
    write_market,
)
from resfolio.errors import AlignmentError, DataError, FormatError, SpecError


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadPricePanel:
    def test_intersection_drops_incomplete_date(self, tmp_path):
        src = _write(tmp_path, "long.csv", (
            "date,symbol,open\n"
            "2020-01-01,AAA,10\n"
            "2020-01-01,BBB,20\n"
            "2020-01-02,AAA,11\n"
        ))
        panel = load_price_panel(src)
        assert panel.dates == ("2020-01-01",)
        assert panel.symbols == ("AAA", "BBB")
        np.testing.assert_allclose(panel.prices, [[10.0, 20.0]])

    def test_non_positive_price_names_row(self, tmp_path):
        src = _write(tmp_path, "bad.csv", (
            "date,symbol,open\n"
            "2020-01-01,AAA,10\n"
            "2020-01-02,AAA,0.0\n"
        ))
        with pytest.raises(DataError, match="bad.csv:3"):
            load_price_panel(src)

    def test_identity_load_keeps_date_order(self, tmp_path):
        dates = [f"2020-01-0{d}" for d in range(1, 6)]
        lines = ["date,symbol,open"]
        for d in dates:
            for i, sym in enumerate(["X", "Y", "Z"]):
                lines.append(f"{d},{sym},{10 + i}")
        panel = load_price_panel(_write(tmp_path, "ok.csv", "\n".join(lines)))
        assert panel.dates == tuple(dates)
        assert panel.prices.shape == (5, 3)

    def test_missing_column_is_format_error(self, tmp_path):
        src = _write(tmp_path, "noprice.csv", "date,symbol,close\n2020-01-01,AAA,10\n")
        with pytest.raises(FormatError, match="open"):
            load_price_panel(src)

    def test_wide_layout(self, tmp_path):
        src = _write(tmp_path, "wide.csv", (
            "date,AAA,BBB\n"
            "2020-01-02,11,21\n"
            "2020-01-01,10,20\n"
            "2020-01-03,12,\n"
        ))
        panel = load_price_panel(src)
        assert panel.dates == ("2020-01-01", "2020-01-02")  # blank cell drops the date
        np.testing.assert_allclose(panel.prices, [[10, 20], [11, 21]])

    def test_empty_intersection(self, tmp_path):
        src = _write(tmp_path, "disjoint.csv", (
            "date,symbol,open\n"
            "2020-01-01,AAA,10\n"
            "2020-01-02,BBB,20\n"
        ))
        with pytest.raises(AlignmentError):
            load_price_panel(src)


class TestComputeReturns:
    def test_direct_formula_up(self):
        panel = PricePanel(("2020-01-01", "2020-01-02"), ("A",), np.array([[100.0], [110.0]]))
        rets = compute_returns(panel)
        np.testing.assert_allclose(rets.values, [[0.10]])
        assert rets.dates == ("2020-01-01",)

    def test_constant_price(self):
        panel = PricePanel(
            ("2020-01-01", "2020-01-02", "2020-01-03"), ("A",), np.array([[100.0]] * 3)
        )
        np.testing.assert_allclose(compute_returns(panel).values, [[0.0], [0.0]])

    def test_direct_formula_down(self):
        panel = PricePanel(("2020-01-01", "2020-01-02"), ("A",), np.array([[100.0], [90.0]]))
        np.testing.assert_allclose(compute_returns(panel).values, [[-0.10]])

    def test_single_date_rejected(self):
        panel = PricePanel(("2020-01-01",), ("A",), np.array([[100.0]]))
        with pytest.raises(DataError):
            compute_returns(panel)

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        from resfolio.data import synthetic_dates
        prices = 50 * np.exp(np.cumsum(rng.normal(0, 0.02, size=(40, 4)), axis=0))
        panel = PricePanel(synthetic_dates(40), ("a", "b", "c", "d"), prices)
        rets = compute_returns(panel)
        rebuilt = panel_from_returns(rets, panel.prices[0], first_date=panel.dates[0])
        np.testing.assert_allclose(rebuilt.prices, panel.prices, rtol=1e-10)


class TestFactorMarket:
    def test_rank_deficient_loadings_rejected(self):
        with pytest.raises(SpecError, match="rank"):
            FactorModelSpec(S=3, C_true=1, B=np.zeros((3, 1)), residual_vols=np.full(3, 0.1))

    def test_zero_noise_market_equals_factor_path(self):
        spec = FactorModelSpec(S=2, C_true=1, B=np.array([[1.0], [1.0]]),
                               residual_vols=np.zeros(2), seed=11)
        market = generate_factor_market(spec, T=3)
        np.testing.assert_allclose(market.returns.values[:, 0], market.factors[:, 0])
        np.testing.assert_allclose(market.returns.values[:, 1], market.factors[:, 0])

    def test_sample_covariance_matches_model(self):
        # oracle: direct sample covariance against B B^T + sigma^2 I
        spec = random_factor_spec(S=50, C_true=5, seed=5, residual_vol_min=0.1, residual_vol_max=0.1)
        market = generate_factor_market(spec, T=10_000)
        X = market.returns.values
        sample_cov = (X - X.mean(0)).T @ (X - X.mean(0)) / (X.shape[0] - 1)
        model_cov = spec.B @ spec.B.T + 0.01 * np.eye(50)
        err = np.linalg.norm(sample_cov - model_cov, "fro")
        assert err <= 0.05 * np.linalg.norm(spec.B @ spec.B.T, "fro")

    def test_reconstruction_identity(self):
        spec = random_factor_spec(S=8, C_true=2, seed=9, residual_vol_min=0.05, residual_vol_max=0.2)
        market = generate_factor_market(spec, T=64)
        assert market.reconstruction_error() <= 1e-12

    def test_determinism(self):
        spec = random_factor_spec(S=6, C_true=2, seed=21)
        a = generate_factor_market(spec, T=30)
        b = generate_factor_market(spec, T=30)
        assert np.array_equal(a.returns.values, b.returns.values)
        assert np.array_equal(a.factors, b.factors)
        assert np.array_equal(a.residuals, b.residuals)

    def test_market_serialization_roundtrip(self, tmp_path):
        spec = random_factor_spec(S=4, C_true=1, seed=2, loading_scale=0.01,
                                  residual_vol_min=0.005, residual_vol_max=0.01)
        market = generate_factor_market(spec, T=25)
        write_market(market, tmp_path / "prices.csv", tmp_path / "market.json")
        loaded = compute_returns(load_price_panel(tmp_path / "prices.csv"))
        np.testing.assert_allclose(loaded.values, market.returns.values, rtol=1e-10, atol=1e-14)
