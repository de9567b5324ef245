"""resfolio: spectral residual factors, quantile-network forecasts, and
walk-forward zero-investment portfolio backtests."""

from .backtest import BacktestConfig, StrategyRun, run_strategy, sweep_C
from .data import (
    FactorModelSpec,
    PricePanel,
    ReturnPanel,
    SyntheticMarket,
    compute_returns,
    generate_factor_market,
    load_price_panel,
)
from .forecast import ForecastDataset, QuantileForecast, TrainConfig, build_dataset, predict, train
from .net import Network, NetworkSpec
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
from .spectral import (
    ResidualProjection,
    StabilityCurve,
    WindowConfig,
    center_rows,
    davis_kahan_bound,
    decompose,
    extract_residual_panel,
    local_stability,
    offdiag_report,
    sin_theta,
    spectral_residual,
    window,
)

__version__ = "0.1.0"
