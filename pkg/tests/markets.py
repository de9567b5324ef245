"""Synthetic market family for the qualitative backtests: one common factor
whose volatility switches between calm and crisis regimes, heterogeneous
loadings, and mean-reverting per-asset residuals (an Ornstein-Uhlenbeck
level, so residual returns are negatively autocorrelated at every lag)."""

import numpy as np

from resfolio.data import ReturnPanel, synthetic_dates, synthetic_symbols


def regime_market(
    seed: int,
    S: int = 30,
    T: int = 900,
    calm_vol: float = 0.01,
    crisis_vol: float = 0.06,
    regime_len: int = 60,
    loading_spread: float = 0.5,
    phi: float = 0.7,
    resid_scale_min: float = 0.004,
    resid_scale_max: float = 0.02,
) -> ReturnPanel:
    rng = np.random.default_rng(seed)
    loadings = 1.0 + rng.uniform(-loading_spread, loading_spread, S)
    factor_vol = np.where((np.arange(T) // regime_len) % 2 == 0, calm_vol, crisis_vol)
    f = rng.standard_normal(T) * factor_vol
    sigma = rng.uniform(resid_scale_min, resid_scale_max, S)
    level = np.zeros(S)
    eps = np.empty((T, S))
    for t in range(T):
        new_level = phi * level + rng.standard_normal(S) * sigma
        eps[t] = new_level - level
        level = new_level
    rets = f[:, None] * loadings[None, :] + eps
    return ReturnPanel(synthetic_dates(T), synthetic_symbols(S), rets)
