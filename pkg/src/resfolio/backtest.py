"""Walk-forward strategy engine.

Pipeline per trade date t: residual projection fit on [t-H, t), forecast
from the H preceding residuals, residual-space weights, pull-back to asset
space, zero-investment normalization, then the realized return against
r_{t+d}. Point-prediction baselines go straight from prediction to the
normalization step.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ReturnPanel
from .errors import ConfigError, ResfolioError
from .forecast import (
    ForecastDataset,
    QuantileForecast,
    TrainConfig,
    TrainedPredictor,
    build_dataset,
    predict,
    train,
)
from .net import NetworkSpec
from .portfolio import (
    BacktestReport,
    Portfolio,
    baseline_ar1,
    baseline_market,
    map_to_assets,
    metrics,
    normalize_zero_investment,
    realized_returns,
    residual_weights,
)
from .spectral import WindowConfig, extract_residual_panel

logger = logging.getLogger(__name__)

STRATEGIES = ("market", "ar1", "linear", "mlp", "dpo", "dpo-nq", "dpo-nf", "dpo-nv")
LEARNED = ("mlp", "dpo", "dpo-nq", "dpo-nf", "dpo-nv")

INTERPRETATION_NOTES = (
    "weights divide predicted mean by predicted variance (floor 1e-12); the risk-aversion "
    "scalar cancels after zero-investment normalization",
    "maximum drawdown is measured peak-to-trough: max over t of (running-peak wealth - "
    "wealth_t) / running-peak wealth",
    "annualization uses periods_per_year (default 252) in AR/AVOL/DDR",
    "the market baseline is buy-and-hold 1/S and is exempt from zero-investment normalization",
    "degenerate weight vectors (centered L1 below 1e-12) trade as the flagged zero portfolio",
)


@dataclass(frozen=True)
class BacktestConfig:
    d: int = 1                      # execution delay in days
    H: int = 256                    # look-back window, shared by extraction and forecasting
    C: int = 10                     # eliminated spectral components
    periods_per_year: float = 252.0
    risk_aversion: float = 1.0      # irrelevant after normalization; kept for the plug-in rule
    strategy: str = "dpo"

    def __post_init__(self):
        problems = []
        if self.d < 0:
            problems.append(f"delay d must be >= 0, got {self.d}")
        if self.periods_per_year <= 0:
            problems.append(f"periods_per_year must be positive, got {self.periods_per_year}")
        if self.strategy not in STRATEGIES:
            problems.append(f"unknown strategy '{self.strategy}'; choose from {STRATEGIES}")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass
class StrategyRun:
    """Everything run_strategy produces for one strategy."""

    strategy: str
    report: BacktestReport
    portfolios: list[Portfolio]
    dates: list[str]
    config: BacktestConfig
    forecasts: list[QuantileForecast] = field(default_factory=list)
    predictor: TrainedPredictor | None = None


@contextmanager
def _stage(name: str):
    try:
        yield
    except ResfolioError as e:
        raise type(e)(f"[{name}] {e}") from e


def strategy_network_spec(strategy: str, base: NetworkSpec) -> NetworkSpec:
    """Each ablation toggles exactly one field of the base architecture."""
    if strategy == "dpo":
        return base
    if strategy == "dpo-nq":
        return replace(base, outputs=1)
    if strategy == "dpo-nf":
        return replace(base, arch="mlp")
    if strategy == "dpo-nv":
        return replace(base, homogeneous=False)
    if strategy == "mlp":
        return replace(base, arch="mlp", homogeneous=False, outputs=1)
    raise ConfigError(f"strategy '{strategy}' does not use a network")


def fit_linear(X: np.ndarray, y: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Pooled least squares without intercept; ridge fallback on singular normal equations."""
    G = X.T @ X
    b = X.T @ y
    eig = np.linalg.eigvalsh(G)
    if eig[0] <= 1e-12 * max(eig[-1], 1.0):
        logger.warning("normal equations singular (eigmin %.3g); applying ridge %.1g", eig[0], ridge)
        G = G + ridge * np.eye(G.shape[0])
    return np.linalg.solve(G, b)


def _test_indices(returns: ReturnPanel, split: str, cfg: BacktestConfig) -> np.ndarray:
    T = returns.n_dates
    start = returns.date_index(split)
    if cfg.strategy == "market":
        first_ok = 0
    elif cfg.strategy == "ar1":
        first_ok = cfg.H + 1
    else:
        first_ok = 2 * cfg.H
    if start < first_ok:
        raise ConfigError(
            f"split at index {start} leaves too little history; "
            f"strategy '{cfg.strategy}' needs at least {first_ok} prior rows"
        )
    stop = T - cfg.d
    if start >= stop:
        raise ConfigError(f"no tradeable dates: split index {start}, panel rows {T}, delay {cfg.d}")
    return np.arange(start, stop)


def run_strategy(
    returns: ReturnPanel,
    split: str,
    config: BacktestConfig,
    net_spec: NetworkSpec | None = None,
    train_config: TrainConfig | None = None,
    seed: int = 0,
) -> StrategyRun:
    """Run one strategy walk-forward and score the realized return series.

    `split` is the first test date (ISO string); everything before it is the
    training range. The residual panel is recomputed per date with its own
    window, so each row only sees prior information.
    """
    cfg = config
    t_idx = _test_indices(returns, split, cfg)
    forecasts: list[QuantileForecast] = []
    predictor = None

    if cfg.strategy == "market":
        with _stage("market"):
            portfolios = baseline_market(returns, t_idx)
    else:
        with _stage("extract"):
            panel, projs = extract_residual_panel(returns, WindowConfig(cfg.H, cfg.C))
        proj_by_t = {p.window_end: p for p in projs}
        if cfg.strategy == "ar1":
            with _stage("reversal"):
                portfolios = baseline_ar1(panel, t_idx - cfg.H)
                for p, t in zip(portfolios, t_idx):
                    p.t, p.date = int(t), returns.dates[int(t)]
        elif cfg.strategy == "linear":
            with _stage("linear-fit"):
                ds = build_dataset(panel, cfg.H, stop=split)
                w = fit_linear(ds.X, ds.y)
            with _stage("linear-predict"):
                portfolios = []
                for t in t_idx:
                    k = t - cfg.H
                    pred = panel.values[k - cfg.H:k].T @ w
                    wts, deg = normalize_zero_investment(pred)
                    portfolios.append(Portfolio(t=int(t), date=returns.dates[int(t)],
                                                weights=wts, degenerate=deg))
        else:
            if net_spec is None:
                net_spec = NetworkSpec(input_len=cfg.H)
            spec = strategy_network_spec(cfg.strategy, net_spec)
            if spec.input_len != cfg.H:
                raise ConfigError(f"network input_len {spec.input_len} must equal H={cfg.H}")
            with _stage("train"):
                ds = build_dataset(panel, cfg.H, stop=split)
                predictor = train(ds, spec, seed, train_config)
            with _stage("predict"):
                ks = t_idx - cfg.H
                windows = np.stack([panel.values[k - cfg.H:k].T for k in ks])  # (n, S, H)
                n, S, H = windows.shape
                out = predictor.network.forward(windows.reshape(n * S, H), train=False)
                out = out.reshape(n, S, -1)
            with _stage("portfolio"):
                portfolios = []
                for j, t in enumerate(t_idx):
                    fc = QuantileForecast.from_quantiles(returns.dates[int(t)], out[j])
                    forecasts.append(fc)
                    if cfg.strategy == "mlp":
                        raw = fc.mu_hat
                    else:
                        b_res = residual_weights(fc.mu_hat, fc.var_hat, cfg.risk_aversion)
                        raw = map_to_assets(proj_by_t[int(t)], b_res)
                    wts, deg = normalize_zero_investment(raw)
                    portfolios.append(Portfolio(t=int(t), date=returns.dates[int(t)],
                                                weights=wts, degenerate=deg))

    with _stage("evaluate"):
        series, kept = realized_returns(portfolios, returns, cfg.d)
        report = metrics(series, cfg.periods_per_year)
    return StrategyRun(
        strategy=cfg.strategy,
        report=report,
        portfolios=kept,
        dates=[p.date for p in kept],
        config=cfg,
        forecasts=forecasts,
        predictor=predictor,
    )


def sweep_C(
    returns: ReturnPanel,
    H: int,
    Cs: list[int],
    split: str,
    d: int = 1,
    periods_per_year: float = 252.0,
) -> list[tuple[int, BacktestReport]]:
    """Reversal strategy over residual panels for each C; C=0 is the raw-return row."""
    out = []
    for C in Cs:
        cfg = BacktestConfig(d=d, H=H, C=C, periods_per_year=periods_per_year, strategy="ar1")
        run = run_strategy(returns, split, cfg)
        out.append((C, run.report))
    return out
