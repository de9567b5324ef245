"""Price/return panels, CSV ingestion, and synthetic factor-model markets.

Panels are rectangular date x asset matrices. Alignment is strict
intersection: a date survives only if every symbol has a price on it.
Dates are ISO-8601 strings ordered lexicographically; no calendar logic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date as _date, timedelta
from pathlib import Path

import numpy as np

from .errors import AlignmentError, DataError, FormatError, ShapeError, SpecError
from .ioutil import atomic_write_text, fmt, write_json

DEFAULT_COLUMNS = {"date": "date", "symbol": "symbol", "price": "open"}


@dataclass(frozen=True)
class PricePanel:
    """Aligned opening-price panel: prices[t, i] is the price of symbols[i] on dates[t]."""

    dates: tuple[str, ...]
    symbols: tuple[str, ...]
    prices: np.ndarray  # (T, S), strictly positive

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if prices.shape != (len(self.dates), len(self.symbols)):
            raise ShapeError(
                f"price matrix {prices.shape} does not match "
                f"{len(self.dates)} dates x {len(self.symbols)} symbols"
            )
        if prices.size and prices.min() <= 0:
            t, i = np.unravel_index(int(np.argmin(prices)), prices.shape)
            raise DataError(f"non-positive price {prices[t, i]} at ({self.dates[t]}, {self.symbols[i]})")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("dates must be strictly increasing")

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class ReturnPanel:
    """Simple-return panel: values[t, i] is the return from dates[t] to the next date."""

    dates: tuple[str, ...]
    symbols: tuple[str, ...]
    values: np.ndarray  # (T, S)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.dates), len(self.symbols)):
            raise ShapeError(
                f"return matrix {values.shape} does not match "
                f"{len(self.dates)} dates x {len(self.symbols)} symbols"
            )

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    def date_index(self, date: str) -> int:
        """Index of the first row with dates[t] >= date."""
        return int(np.searchsorted(np.asarray(self.dates), date, side="left"))


def _read_rows(source: str | Path) -> list[list[str]]:
    with open(source, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise FormatError(f"{source}: empty file")
    return rows


def load_price_panel(source: str | Path, column_map: dict[str, str] | None = None) -> PricePanel:
    """Load a CSV price file into an aligned panel.

    Two layouts are accepted:
      * long  -- header contains the mapped date/symbol/price columns
                 (default ``date,symbol,open``), one row per observation;
      * wide  -- header is ``date,<sym1>,<sym2>,...``, one row per date.

    Dates on which any symbol is missing are dropped (strict intersection).
    """
    colmap = dict(DEFAULT_COLUMNS)
    if column_map:
        colmap.update(column_map)
    rows = _read_rows(source)
    header = [h.strip() for h in rows[0]]

    if colmap["symbol"] in header:
        missing = [colmap[k] for k in ("date", "price") if colmap[k] not in header]
        if missing:
            raise FormatError(f"{source}: missing column(s) {missing}; header is {header}")
        panel = _parse_long(source, rows, header, colmap)
    elif header and header[0] == colmap["date"] and len(header) >= 2:
        panel = _parse_wide(source, rows, header)
    else:
        missing = [colmap[k] for k in ("date", "symbol", "price") if colmap[k] not in header]
        raise FormatError(f"{source}: missing column(s) {missing}; header is {header}")
    return panel


def _parse_long(source, rows, header, colmap) -> PricePanel:
    i_date = header.index(colmap["date"])
    i_sym = header.index(colmap["symbol"])
    i_price = header.index(colmap["price"])
    cells: dict[tuple[str, str], float] = {}
    for n, row in enumerate(rows[1:], start=2):
        if len(row) <= max(i_date, i_sym, i_price):
            raise FormatError(f"{source}:{n}: expected {len(header)} cells, got {len(row)}")
        d, s = row[i_date].strip(), row[i_sym].strip()
        try:
            p = float(row[i_price])
        except ValueError as e:
            raise FormatError(f"{source}:{n}: unparseable price '{row[i_price]}'") from e
        if p <= 0:
            raise DataError(f"{source}:{n}: non-positive price {p} for ({d}, {s})")
        if (d, s) in cells:
            raise FormatError(f"{source}:{n}: duplicate observation for ({d}, {s})")
        cells[(d, s)] = p
    symbols = tuple(sorted({s for _, s in cells}))
    all_dates = sorted({d for d, _ in cells})
    if len(all_dates) < 2:
        raise DataError(f"{source}: need at least 2 dates, found {len(all_dates)}")
    kept = [d for d in all_dates if all((d, s) in cells for s in symbols)]
    if not kept:
        raise AlignmentError(f"{source}: no date has prices for all {len(symbols)} symbols")
    prices = np.array([[cells[(d, s)] for s in symbols] for d in kept])
    return PricePanel(tuple(kept), symbols, prices)


def _parse_wide(source, rows, header) -> PricePanel:
    symbols = tuple(h.strip() for h in header[1:])
    dates, data = [], []
    if len(rows) - 1 < 2:
        raise DataError(f"{source}: need at least 2 dates, found {len(rows) - 1}")
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(f"{source}:{n}: expected {len(header)} cells, got {len(row)}")
        if any(not c.strip() for c in row[1:]):
            continue  # strict intersection: a blank cell drops the whole date
        vals = []
        for sym, cell in zip(symbols, row[1:]):
            try:
                p = float(cell)
            except ValueError as e:
                raise FormatError(f"{source}:{n}: unparseable price '{cell}'") from e
            if p <= 0:
                raise DataError(f"{source}:{n}: non-positive price {p} for ({row[0].strip()}, {sym})")
            vals.append(p)
        dates.append(row[0].strip())
        data.append(vals)
    if not dates:
        raise AlignmentError(f"{source}: no complete date rows")
    order = np.argsort(dates)
    return PricePanel(
        tuple(dates[i] for i in order), symbols, np.array(data)[order]
    )


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """Simple returns r[t] = p[t+1]/p[t] - 1, indexed by the start date of each interval."""
    if panel.n_dates < 2:
        raise DataError(f"need at least 2 dates to compute returns, have {panel.n_dates}")
    rets = panel.prices[1:] / panel.prices[:-1] - 1.0
    return ReturnPanel(panel.dates[:-1], panel.symbols, rets)


def panel_from_returns(returns: ReturnPanel, first_prices: np.ndarray, first_date: str | None = None) -> PricePanel:
    """Rebuild a price panel by compounding returns from a starting price row."""
    first_prices = np.asarray(first_prices, dtype=float)
    if first_prices.shape != (returns.n_symbols,):
        raise ShapeError(f"expected {returns.n_symbols} starting prices, got {first_prices.shape}")
    if np.any(returns.values <= -1.0):
        raise DataError("returns <= -1 cannot be compounded into positive prices")
    growth = np.cumprod(1.0 + returns.values, axis=0)
    prices = np.vstack([first_prices, first_prices * growth])
    dates = list(returns.dates)
    dates.append(_next_date(dates[-1]))
    if first_date is not None:
        dates[0] = first_date
    return PricePanel(tuple(dates), returns.symbols, prices)


def _next_date(iso: str) -> str:
    y, m, d = (int(p) for p in iso.split("-"))
    return (_date(y, m, d) + timedelta(days=1)).isoformat()


def synthetic_dates(T: int, start: str = "2000-01-03") -> tuple[str, ...]:
    y, m, d = (int(p) for p in start.split("-"))
    d0 = _date(y, m, d)
    return tuple((d0 + timedelta(days=t)).isoformat() for t in range(T))


def synthetic_symbols(S: int) -> tuple[str, ...]:
    width = max(3, len(str(S - 1)))
    return tuple(f"A{i:0{width}d}" for i in range(S))


@dataclass(frozen=True)
class FactorModelSpec:
    """Linear factor-market specification r_t = B f_t + eps_t.

    Factors have unit variance; eps has diagonal covariance diag(residual_vols^2).
    residual_vols may contain zeros for degenerate noise-free markets.
    """

    S: int
    C_true: int
    B: np.ndarray              # (S, C_true) loadings, full column rank
    residual_vols: np.ndarray  # (S,) >= 0
    factor_vol: float = 1.0
    seed: int = 0

    def __post_init__(self):
        B = np.asarray(self.B, dtype=float)
        vols = np.asarray(self.residual_vols, dtype=float)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "residual_vols", vols)
        if not 0 < self.C_true < self.S:
            raise SpecError(f"need 0 < C_true < S, got C_true={self.C_true}, S={self.S}")
        if B.shape != (self.S, self.C_true):
            raise SpecError(f"B must be {self.S}x{self.C_true}, got {B.shape}")
        if np.linalg.matrix_rank(B) < self.C_true:
            raise SpecError("loading matrix B is rank deficient")
        if vols.shape != (self.S,):
            raise SpecError(f"residual_vols must have length {self.S}, got {vols.shape}")
        if np.any(vols < 0):
            raise SpecError("residual_vols must be non-negative")


@dataclass(frozen=True)
class SyntheticMarket:
    """A generated market with its ground-truth factor and residual paths."""

    returns: ReturnPanel
    factors: np.ndarray    # (T, C_true)
    residuals: np.ndarray  # (T, S)
    spec: FactorModelSpec

    def reconstruction_error(self) -> float:
        model = self.factors @ self.spec.B.T + self.residuals
        return float(np.max(np.abs(self.returns.values - model)))


def generate_factor_market(spec: FactorModelSpec, T: int) -> SyntheticMarket:
    """Draw T dates of r = B f + eps with independent Gaussian f and eps.

    Reproducible: identical spec and seed give bitwise-identical draws.
    """
    if T < 2:
        raise SpecError(f"horizon T must be >= 2, got {T}")
    rng = np.random.default_rng(spec.seed)
    factors = rng.standard_normal((T, spec.C_true)) * spec.factor_vol
    residuals = rng.standard_normal((T, spec.S)) * spec.residual_vols[None, :]
    rets = factors @ spec.B.T + residuals
    panel = ReturnPanel(synthetic_dates(T), synthetic_symbols(spec.S), rets)
    return SyntheticMarket(panel, factors, residuals, spec)


def random_factor_spec(
    S: int,
    C_true: int,
    seed: int,
    loading_scale: float = 1.0,
    residual_vol_min: float = 0.1,
    residual_vol_max: float = 0.1,
) -> FactorModelSpec:
    """Gaussian loadings and uniform residual vols; loadings drawn from a separate stream."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x10AD]))
    B = rng.standard_normal((S, C_true)) * loading_scale
    vols = rng.uniform(residual_vol_min, residual_vol_max, size=S)
    return FactorModelSpec(S=S, C_true=C_true, B=B, residual_vols=vols, seed=seed)


def write_wide_csv(path: str | Path, dates, symbols, values: np.ndarray) -> None:
    """Emit a `date,<sym1>,...` matrix CSV with round-trip float formatting."""
    values = np.asarray(values)
    lines = [",".join(["date", *symbols])]
    for t, d in enumerate(dates):
        lines.append(",".join([d, *(fmt(float(v)) for v in values[t])]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_market(market: SyntheticMarket, prices_path: str | Path, sidecar_path: str | Path,
                 base_price: float = 100.0) -> None:
    """Serialize a synthetic market as a wide price CSV plus a JSON sidecar.

    Prices compound from `base_price`, so the standard loader + compute_returns
    round-trips to the generated returns. Requires all returns > -1.
    """
    panel = panel_from_returns(market.returns, np.full(market.spec.S, base_price))
    write_wide_csv(prices_path, panel.dates, panel.symbols, panel.prices)
    write_json(sidecar_path, {
        "kind": "synthetic-market",
        "S": market.spec.S,
        "C_true": market.spec.C_true,
        "B": market.spec.B.tolist(),
        "residual_vols": market.spec.residual_vols.tolist(),
        "factor_vol": market.spec.factor_vol,
        "seed": market.spec.seed,
        "base_price": base_price,
        "symbols": list(market.returns.symbols),
    })
