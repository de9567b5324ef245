"""Training and prediction of per-asset conditional quantiles.

One shared network maps a length-H residual history to Q-1 quantile levels
(or a single conditional mean for the squared-loss variant). Derived
moments: mu_hat is the mean of the predicted quantiles, var_hat their
population variance (divisor Q-1), mad the median absolute deviation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import ReturnPanel
from .errors import ConfigError, ShapeError, TrainingError
from .ioutil import write_csv
from .net import (
    Network,
    NetworkSpec,
    adam_init,
    adam_step,
    multi_quantile_grad,
    multi_quantile_loss,
    squared_grad,
    squared_loss,
)

logger = logging.getLogger(__name__)


@dataclass
class ForecastDataset:
    """Pooled (window, next-value) samples across assets and dates."""

    X: np.ndarray            # (N, H) feature windows
    y: np.ndarray            # (N,) targets
    asset_index: np.ndarray  # (N,)
    date_index: np.ndarray   # (N,) target row in the source panel
    H: int
    tag: str = "train"

    def __len__(self) -> int:
        return self.X.shape[0]


def build_dataset(
    panel: ReturnPanel | np.ndarray,
    H: int,
    start: str | None = None,
    stop: str | None = None,
    tag: str = "train",
) -> ForecastDataset:
    """Samples (x_t = values[t-H:t, i], y_t = values[t, i]) with target date in [start, stop).

    Feature windows always end strictly before the target row, so no sample
    leaks its own target.
    """
    if isinstance(panel, ReturnPanel):
        values = panel.values
        dates = np.asarray(panel.dates)
    else:
        values = np.asarray(panel, dtype=float)
        dates = None
    T, S = values.shape
    if T <= H:
        raise ConfigError(f"panel has {T} rows; need more than H={H}")
    lo = H
    hi = T
    if start is not None:
        if dates is None:
            raise ConfigError("date bounds require a ReturnPanel with dates")
        lo = max(lo, int(np.searchsorted(dates, start, side="left")))
    if stop is not None:
        if dates is None:
            raise ConfigError("date bounds require a ReturnPanel with dates")
        hi = min(hi, int(np.searchsorted(dates, stop, side="left")))
    ts = np.arange(lo, hi)
    if ts.size == 0:
        raise ConfigError(f"empty split: no target dates in [{start}, {stop}) with H={H}")
    # windows stacked asset-major within each date
    X = np.empty((ts.size * S, H))
    y = np.empty(ts.size * S)
    a_idx = np.empty(ts.size * S, dtype=int)
    d_idx = np.empty(ts.size * S, dtype=int)
    for j, t in enumerate(ts):
        sl = slice(j * S, (j + 1) * S)
        X[sl] = values[t - H:t].T
        y[sl] = values[t]
        a_idx[sl] = np.arange(S)
        d_idx[sl] = t
    return ForecastDataset(X=X, y=y, asset_index=a_idx, date_index=d_idx, H=H, tag=tag)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 1024
    learning_rate: float = 0.001
    val_fraction: float = 0.2     # most recent dates of the training set, report-only
    retrain_every: int = 0        # 0 disables walk-forward refits


@dataclass
class TrainedPredictor:
    network: Network
    seed: int
    epochs: int
    loss_history: list[tuple[float, float]]  # (train, validation) per epoch

    @property
    def spec(self) -> NetworkSpec:
        return self.network.spec


def _loss_and_grad(spec: NetworkSpec, y, out):
    if spec.loss_kind == "quantile":
        return multi_quantile_loss(y, out, spec.Q), multi_quantile_grad(y, out, spec.Q)
    return squared_loss(y, out), squared_grad(y, out)


def train(
    dataset: ForecastDataset,
    spec: NetworkSpec,
    seed: int,
    config: TrainConfig | None = None,
    initial: TrainedPredictor | None = None,
) -> TrainedPredictor:
    """Deterministic mini-batch training of the shared predictor.

    The validation slice is the most recent val_fraction of distinct target
    dates; it is never used for parameter updates. Pass `initial` to continue
    training an existing predictor (e.g. with a lowered learning rate).
    """
    cfg = config or TrainConfig()
    if dataset.H != spec.input_len:
        raise ShapeError(f"dataset windows have length {dataset.H}, spec expects {spec.input_len}")
    if len(dataset) == 0:
        raise ConfigError("empty training dataset")

    uniq_dates = np.unique(dataset.date_index)
    n_val_dates = int(len(uniq_dates) * cfg.val_fraction)
    if n_val_dates > 0:
        val_start = uniq_dates[-n_val_dates]
        val_mask = dataset.date_index >= val_start
    else:
        val_mask = np.zeros(len(dataset), dtype=bool)
    tr = np.flatnonzero(~val_mask)
    va = np.flatnonzero(val_mask)
    if tr.size == 0:
        raise ConfigError("validation fraction leaves no training samples")

    net = initial.network if initial is not None else Network(spec, seed)
    if initial is not None and initial.spec != spec:
        raise ConfigError("initial predictor spec differs from requested spec")
    params = net.params()
    state = adam_init(params)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7EA1]))
    history = list(initial.loss_history) if initial is not None else []

    for epoch in range(cfg.epochs):
        order = rng.permutation(tr)
        total, count = 0.0, 0
        for lo in range(0, order.size, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            out = net.forward(dataset.X[batch], train=True)
            loss, g = _loss_and_grad(spec, dataset.y[batch], out)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch offset {lo}")
            net.backward(g)
            adam_step(params, net.grads(), state, lr=cfg.learning_rate)
            total += loss * batch.size
            count += batch.size
        train_loss = total / count
        if va.size:
            val_out = net.forward(dataset.X[va], train=False)
            val_loss, _ = _loss_and_grad(spec, dataset.y[va], val_out)
        else:
            val_loss = float("nan")
        history.append((train_loss, val_loss))
        logger.debug("epoch %d train=%.6g val=%.6g", epoch, train_loss, val_loss)

    return TrainedPredictor(network=net, seed=seed, epochs=len(history), loss_history=history)


@dataclass
class QuantileForecast:
    """Per-asset predicted quantiles and the moments derived from them."""

    date: str
    quantiles: np.ndarray  # (S, n_outputs)
    mu_hat: np.ndarray     # (S,)
    var_hat: np.ndarray    # (S,)
    mad: np.ndarray        # (S,)

    @classmethod
    def from_quantiles(cls, date: str, quantiles: np.ndarray) -> "QuantileForecast":
        q = np.atleast_2d(np.asarray(quantiles, dtype=float))
        mu = q.mean(axis=1)
        var = q.var(axis=1)  # population variance over the quantile values
        med = np.median(q, axis=1)
        mad = np.median(np.abs(q - med[:, None]), axis=1)
        return cls(date=date, quantiles=q, mu_hat=mu, var_hat=var, mad=mad)

    def crossing_rate(self) -> float:
        """Fraction of adjacent quantile pairs that are out of order."""
        if self.quantiles.shape[1] < 2:
            return 0.0
        bad = np.diff(self.quantiles, axis=1) < 0
        return float(bad.mean())


def predict(predictor: TrainedPredictor, windows: np.ndarray, date: str = "") -> QuantileForecast:
    """Apply the shared network to one length-H window per asset (eval mode)."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    if windows.shape[1] != predictor.spec.input_len:
        raise ShapeError(
            f"windows have length {windows.shape[1]}, predictor expects {predictor.spec.input_len}"
        )
    out = predictor.network.forward(windows, train=False)
    return QuantileForecast.from_quantiles(date, out)


def write_learning_curve(path, history: list[tuple[float, float]]) -> None:
    write_csv(path, ["epoch", "train_loss", "val_loss"],
              [(i, tr, va) for i, (tr, va) in enumerate(history)])


def write_forecasts_csv(path, forecasts: list[QuantileForecast], symbols) -> None:
    """Long CSV: date,symbol,mu_hat,var_hat,mad,q01,...,q{n}."""
    if not forecasts:
        raise ConfigError("no forecasts to write")
    n_q = forecasts[0].quantiles.shape[1]
    header = ["date", "symbol", "mu_hat", "var_hat", "mad"] + [f"q{j + 1:02d}" for j in range(n_q)]
    rows = []
    for fc in forecasts:
        for i, sym in enumerate(symbols):
            rows.append([fc.date, sym, float(fc.mu_hat[i]), float(fc.var_hat[i]),
                         float(fc.mad[i]), *map(float, fc.quantiles[i])])
    write_csv(path, header, rows)
