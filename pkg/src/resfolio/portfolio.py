"""Portfolio construction, realized returns, and evaluation metrics.

All emitted portfolios except the buy-and-hold market baseline are
zero-investment (weights sum to 0) with unit L1 norm; inputs whose centered
vector vanishes produce a flagged all-zero portfolio instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import ReturnPanel
from .errors import ConfigError, DataError, ShapeError
from .spectral import ResidualProjection

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
DEGENERATE_L1 = 1e-12


@dataclass
class Portfolio:
    t: int                 # row index into the return panel it trades against
    date: str
    weights: np.ndarray    # (S,)
    degenerate: bool = False


def residual_weights(mu_hat: np.ndarray, var_hat: np.ndarray,
                     risk_aversion: float = 1.0) -> np.ndarray:
    """Plug-in rule: predicted mean over risk-scaled predicted variance."""
    mu = np.asarray(mu_hat, dtype=float)
    var = np.asarray(var_hat, dtype=float)
    if mu.shape != var.shape:
        raise ShapeError(f"mu_hat {mu.shape} and var_hat {var.shape} differ")
    if np.any(var < 0):
        raise DataError("var_hat must be non-negative")
    return mu / (risk_aversion * np.maximum(var, VARIANCE_FLOOR))


def map_to_assets(proj: ResidualProjection, b_res: np.ndarray) -> np.ndarray:
    """Pull residual-space weights back to asset space via the projector transpose."""
    b_res = np.asarray(b_res, dtype=float)
    if b_res.shape != (proj.S,):
        raise ShapeError(f"residual weights have shape {b_res.shape}, expected ({proj.S},)")
    return proj.A.T @ b_res


def normalize_zero_investment(b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Center to zero sum and scale to unit L1 norm.

    Returns (weights, degenerate). Vectors proportional to all-ones have no
    zero-investment direction and give the flagged zero portfolio.
    """
    b = np.asarray(b, dtype=float)
    centered = b - b.mean()
    centered -= centered.mean()  # second pass kills cancellation residue on near-constant inputs
    l1 = np.abs(centered).sum()
    if l1 <= DEGENERATE_L1:
        logger.warning("degenerate portfolio input (centered L1 = %.3g); emitting zero weights", l1)
        return np.zeros_like(b), True
    return centered / l1, False


def realized_returns(portfolios: list[Portfolio], returns: ReturnPanel, d: int,
                     ) -> tuple[np.ndarray, list[Portfolio]]:
    """R_t = b_t . r_{t+d}; portfolios whose delayed return row is missing are dropped."""
    if d < 0:
        raise ConfigError(f"delay d must be >= 0, got {d}")
    T = returns.n_dates
    series, kept = [], []
    for p in portfolios:
        if p.weights.shape != (returns.n_symbols,):
            raise ShapeError(f"portfolio at {p.date} has {p.weights.shape[0]} weights, "
                             f"panel has {returns.n_symbols} symbols")
        if p.t + d >= T:
            continue
        series.append(float(p.weights @ returns.values[p.t + d]))
        kept.append(p)
    if not kept:
        raise ConfigError(f"no portfolio dates overlap the panel with delay d={d}")
    return np.array(series), kept


@dataclass
class BacktestReport:
    """Realized return series plus its summary metrics (NaN marks undefined ratios)."""

    returns: np.ndarray
    wealth: np.ndarray   # cumulative product path of 1 + R_t
    cw: float
    ar: float
    avol: float
    asr: float
    mdd: float
    cr: float
    ddr: float
    periods_per_year: float = 252.0

    def metric_dict(self) -> dict[str, float]:
        return {"CW": self.cw, "AR": self.ar, "AVOL": self.avol, "ASR": self.asr,
                "MDD": self.mdd, "CR": self.cr, "DDR": self.ddr}


def metrics(R: np.ndarray, periods_per_year: float = 252.0) -> BacktestReport:
    """Cumulative wealth, annualized return/vol/Sharpe, drawdown, Calmar, downside ratio."""
    R = np.asarray(R, dtype=float)
    if R.size == 0:
        raise DataError("empty return series")
    T = R.size
    wealth = np.cumprod(1.0 + R)
    cw = float(wealth[-1])
    ar = periods_per_year / T * float(R.sum())
    avol = math.sqrt(periods_per_year / T * float((R ** 2).sum()))
    asr = ar / avol if avol > 0 else math.nan
    peaks = np.maximum.accumulate(wealth)
    mdd = float(((peaks - wealth) / peaks).max())
    cr = ar / mdd if mdd > 0 else math.nan
    downside = math.sqrt(periods_per_year / T * float((np.minimum(R, 0.0) ** 2).sum()))
    ddr = ar / downside if downside > 0 else math.nan
    return BacktestReport(returns=R, wealth=wealth, cw=cw, ar=ar, avol=avol, asr=asr,
                          mdd=mdd, cr=cr, ddr=ddr, periods_per_year=periods_per_year)


def baseline_market(returns: ReturnPanel, t_indices) -> list[Portfolio]:
    """Uniform buy-and-hold weights 1/S; exempt from zero-investment normalization."""
    S = returns.n_symbols
    w = np.full(S, 1.0 / S)
    return [Portfolio(t=int(t), date=returns.dates[int(t)], weights=w.copy()) for t in t_indices]


def baseline_ar1(series: ReturnPanel, t_indices) -> list[Portfolio]:
    """Reversal portfolio: the negated previous observation, centered and L1-normalized."""
    out = []
    for t in t_indices:
        t = int(t)
        if t < 1:
            raise ConfigError(f"reversal needs one prior observation, got index {t}")
        w, degenerate = normalize_zero_investment(-series.values[t - 1])
        out.append(Portfolio(t=t, date=series.dates[t], weights=w, degenerate=degenerate))
    return out
