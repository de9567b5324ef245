"""Command-line pipeline runner.

Subcommands: simulate | extract | train | backtest | sweep-c | stability |
report. Runs are driven by a TOML config with sections mirroring the library
types; `--set section.key=value` overrides individual entries and `--seed` /
`--out` override the top-level ones. Outputs are written atomically and are
byte-identical across re-runs with the same config and seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import backtest as bt
from . import forecast as fc
from .data import (
    FactorModelSpec,
    ReturnPanel,
    compute_returns,
    generate_factor_market,
    load_price_panel,
    random_factor_spec,
    write_market,
    write_wide_csv,
)
from .errors import ConfigError, ResfolioError
from .ioutil import write_csv, write_json
from .net import NetworkSpec, default_taus, save_network
from .spectral import WindowConfig, extract_residual_panel, local_stability, offdiag_report

logger = logging.getLogger(__name__)

_REQUIRED = object()


class ConfigReader:
    """Dotted-path lookup over the parsed TOML dict, collecting every bad key."""

    def __init__(self, data: dict):
        self.data = data
        self.problems: list[str] = []

    def get(self, path: str, default=_REQUIRED, kind=None):
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                if default is _REQUIRED:
                    self.problems.append(f"missing required key '{path}'")
                    return None
                return default
            node = node[part]
        if kind is not None and not isinstance(node, kind):
            kinds = kind if isinstance(kind, tuple) else (kind,)
            self.problems.append(
                f"key '{path}' has type {type(node).__name__}, expected "
                + "/".join(k.__name__ for k in kinds)
            )
            return None
        return node

    def has(self, path: str) -> bool:
        node = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return False
            node = node[part]
        return True

    def check(self):
        if self.problems:
            raise ConfigError("config validation failed: " + "; ".join(self.problems))


def _parse_set(entry: str) -> tuple[str, object]:
    if "=" not in entry:
        raise ConfigError(f"--set expects key=value, got '{entry}'")
    key, raw = entry.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def _apply_set(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set cannot descend into non-table key '{p}' of '{key}'")
    node[parts[-1]] = value


def load_config(args) -> ConfigReader:
    data: dict = {}
    if args.config:
        with open(args.config, "rb") as fh:
            data = tomllib.load(fh)
    for entry in args.set or []:
        k, v = _parse_set(entry)
        _apply_set(data, k, v)
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    reader = ConfigReader(data)
    reader.get("seed", kind=int)
    reader.get("out", default="out", kind=str)
    return reader


def _out_dir(cfg: ConfigReader) -> Path:
    out = Path(cfg.get("out", default="out", kind=str) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _synthetic_spec(cfg: ConfigReader) -> FactorModelSpec:
    S = cfg.get("data.synthetic.S", kind=int)
    C_true = cfg.get("data.synthetic.C_true", kind=int)
    seed = cfg.get("data.synthetic.seed", default=cfg.get("seed", default=0, kind=int), kind=int)
    scale = cfg.get("data.synthetic.loading_scale", default=0.02, kind=(int, float))
    vmin = cfg.get("data.synthetic.residual_vol_min", default=0.01, kind=(int, float))
    vmax = cfg.get("data.synthetic.residual_vol_max", default=0.01, kind=(int, float))
    cfg.check()
    return random_factor_spec(S, C_true, seed, loading_scale=float(scale),
                              residual_vol_min=float(vmin), residual_vol_max=float(vmax))


def _load_returns(cfg: ConfigReader) -> ReturnPanel:
    if cfg.has("data.prices"):
        path = cfg.get("data.prices", kind=str)
        colmap = cfg.get("data.columns", default=None, kind=dict)
        cfg.check()
        return compute_returns(load_price_panel(path, colmap))
    if cfg.has("data.synthetic"):
        spec = _synthetic_spec(cfg)
        T = cfg.get("data.synthetic.T", kind=int)
        cfg.check()
        return generate_factor_market(spec, T).returns
    raise ConfigError("config needs either data.prices or a [data.synthetic] table")


def _window(cfg: ConfigReader) -> WindowConfig:
    H = cfg.get("window.H", default=256, kind=int)
    C = cfg.get("window.C", default=10, kind=int)
    cfg.check()
    return WindowConfig(H=H, C=C)


def _network_spec(cfg: ConfigReader, H: int) -> NetworkSpec:
    if cfg.has("network.taus"):
        taus = tuple(float(t) for t in cfg.get("network.taus", kind=list))
    else:
        taus = default_taus(cfg.get("network.num_scales", default=22, kind=int),
                            cfg.get("network.tau_step", default=1, kind=int))
    kw = dict(
        input_len=H,
        psi1_hidden=tuple(cfg.get("network.psi1_hidden", default=[256, 256, 256], kind=list)),
        psi2_hidden=tuple(cfg.get("network.psi2_hidden", default=[128] * 8, kind=list)),
        K=cfg.get("network.K", default=256, kind=int),
        Q=cfg.get("network.Q", default=32, kind=int),
        Hp=cfg.get("network.Hp", default=64, kind=int),
        taus=taus,
        dropout_rate=float(cfg.get("network.dropout_rate", default=0.5, kind=(int, float))),
        rescale_exponent=float(cfg.get("network.rescale_exponent", default=0.5, kind=(int, float))),
        homogeneous=cfg.get("network.homogeneous", default=True, kind=bool),
        mlp_hidden=tuple(cfg.get("network.mlp_hidden", default=[512] * 4, kind=list)),
        batch_norm=cfg.get("network.batch_norm", default=True, kind=bool),
    )
    cfg.check()
    return NetworkSpec(**kw)


def _train_config(cfg: ConfigReader) -> fc.TrainConfig:
    out = fc.TrainConfig(
        epochs=cfg.get("train.epochs", default=20, kind=int),
        batch_size=cfg.get("train.batch_size", default=1024, kind=int),
        learning_rate=float(cfg.get("train.learning_rate", default=0.001, kind=(int, float))),
        val_fraction=float(cfg.get("train.val_fraction", default=0.2, kind=(int, float))),
    )
    cfg.check()
    return out


def _config_echo(cfg: ConfigReader) -> dict:
    return json.loads(json.dumps(cfg.data))


def cmd_simulate(cfg: ConfigReader) -> None:
    spec = _synthetic_spec(cfg)
    T = cfg.get("data.synthetic.T", kind=int)
    cfg.check()
    market = generate_factor_market(spec, T)
    out = _out_dir(cfg)
    write_market(market, out / "prices.csv", out / "market.json")
    print(f"wrote {out / 'prices.csv'} and {out / 'market.json'}")


def cmd_extract(cfg: ConfigReader) -> None:
    returns = _load_returns(cfg)
    window = _window(cfg)
    head = cfg.get("extract.spectrum_head", default=10, kind=int)
    cfg.check()
    panel, projs = extract_residual_panel(returns, window)
    out = _out_dir(cfg)
    write_wide_csv(out / "residuals.csv", panel.dates, panel.symbols, panel.values)
    diagnostics = []
    for date, proj in zip(panel.dates, projs):
        rep = offdiag_report(proj)
        diagnostics.append({
            "date": date,
            "trace": float(np.trace(proj.A)),
            "max_offdiag": rep.max_offdiag,
            "mean_offdiag": rep.mean_offdiag,
            "singular_values_head": [float(s) for s in proj.singular_values[:head]],
        })
    write_json(out / "diagnostics.json", {"H": window.H, "C": window.C, "windows": diagnostics})
    print(f"wrote {out / 'residuals.csv'} and {out / 'diagnostics.json'}")


def cmd_train(cfg: ConfigReader) -> None:
    returns = _load_returns(cfg)
    window = _window(cfg)
    split = cfg.get("backtest.split", kind=str)
    seed = cfg.get("seed", kind=int)
    spec = _network_spec(cfg, window.H)
    train_cfg = _train_config(cfg)
    strategy = cfg.get("train.strategy", default="dpo", kind=str)
    cfg.check()
    panel, _ = extract_residual_panel(returns, window, keep_projections=False)
    dataset = fc.build_dataset(panel, window.H, stop=split)
    predictor = fc.train(dataset, bt.strategy_network_spec(strategy, spec), seed, train_cfg)
    out = _out_dir(cfg)
    save_network(out / "checkpoint.json", predictor.network,
                 metadata={"seed": seed, "epochs": predictor.epochs, "strategy": strategy})
    fc.write_learning_curve(out / "learning_curve.csv", predictor.loss_history)
    print(f"wrote {out / 'checkpoint.json'} and {out / 'learning_curve.csv'}")


def cmd_backtest(cfg: ConfigReader) -> None:
    returns = _load_returns(cfg)
    window = _window(cfg)
    split = cfg.get("backtest.split", kind=str)
    seed = cfg.get("seed", kind=int)
    strategies = cfg.get("backtest.strategies", default=["dpo"], kind=list)
    delay = cfg.get("backtest.delay", default=1, kind=int)
    tyear = float(cfg.get("backtest.periods_per_year", default=252.0, kind=(int, float)))
    lam = float(cfg.get("backtest.risk_aversion", default=1.0, kind=(int, float)))
    emit_forecasts = cfg.get("backtest.emit_forecasts", default=True, kind=bool)
    net_spec = _network_spec(cfg, window.H)
    train_cfg = _train_config(cfg)
    cfg.check()

    out = _out_dir(cfg)
    results = {}
    suffix = (lambda s: "") if len(strategies) == 1 else (lambda s: f"_{s}")
    for strategy in strategies:
        config = bt.BacktestConfig(d=delay, H=window.H, C=window.C, periods_per_year=tyear,
                                   risk_aversion=lam, strategy=strategy)
        run = bt.run_strategy(returns, split, config, net_spec, train_cfg, seed)
        rep = run.report
        results[strategy] = {
            "metrics": rep.metric_dict(),
            "n_dates": len(run.dates),
            "first_date": run.dates[0],
            "last_date": run.dates[-1],
            "degenerate_dates": sum(p.degenerate for p in run.portfolios),
        }
        write_csv(out / f"returns{suffix(strategy)}.csv", ["date", "R", "CW"],
                  [(d, float(r), float(w)) for d, r, w in zip(run.dates, rep.returns, rep.wealth)])
        write_csv(out / f"weights{suffix(strategy)}.csv", ["date", *returns.symbols],
                  [(p.date, *map(float, p.weights)) for p in run.portfolios])
        if run.forecasts and emit_forecasts:
            fc.write_forecasts_csv(out / f"forecasts{suffix(strategy)}.csv",
                                   run.forecasts, returns.symbols)
    write_json(out / "report.json", {
        "config": _config_echo(cfg),
        "interpretation": list(bt.INTERPRETATION_NOTES),
        "strategies": results,
    })
    print(f"wrote {out / 'report.json'}")


def cmd_sweep_c(cfg: ConfigReader) -> None:
    returns = _load_returns(cfg)
    window = _window(cfg)
    split = cfg.get("backtest.split", kind=str)
    Cs = cfg.get("sweep.Cs", default=[0, 1, 10, 20], kind=list)
    delay = cfg.get("backtest.delay", default=1, kind=int)
    tyear = float(cfg.get("backtest.periods_per_year", default=252.0, kind=(int, float)))
    cfg.check()
    rows = []
    for C, rep in bt.sweep_C(returns, window.H, [int(c) for c in Cs], split, delay, tyear):
        rows.append((C, rep.asr, rep.ar, rep.avol, rep.ddr, rep.cr, rep.mdd))
    out = _out_dir(cfg)
    write_csv(out / "sweep.csv", ["C", "ASR", "AR", "AVOL", "DDR", "CR", "MDD"], rows)
    print(f"wrote {out / 'sweep.csv'}")


def cmd_stability(cfg: ConfigReader) -> None:
    returns = _load_returns(cfg)
    H = cfg.get("window.H", default=256, kind=int)
    Cs = cfg.get("stability.Cs", default=[0, 1, 10], kind=list)
    stride = cfg.get("stability.stride", default=0, kind=int)
    cfg.check()
    curve = local_stability(returns, H, [int(c) for c in Cs], stride or None)
    out = _out_dir(cfg)
    header = ["delta"] + [f"C{c}" for c in curve.ratios]
    rows = [
        (int(curve.deltas[i]), *(float(curve.ratios[c][i]) for c in curve.ratios))
        for i in range(curve.deltas.size)
    ]
    write_csv(out / "stability.csv", header, rows)
    print(f"wrote {out / 'stability.csv'}")


def cmd_report(cfg: ConfigReader, inputs: list[str]) -> None:
    out = _out_dir(cfg)
    rows = []
    for src in inputs:
        src = Path(src)
        report_path = src / "report.json" if src.is_dir() else src
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
        run_name = report_path.parent.name
        for strategy, block in sorted(report.get("strategies", {}).items()):
            for metric, value in sorted(block["metrics"].items()):
                rows.append((run_name, strategy, "metrics", metric,
                             float("nan") if value is None else float(value)))
            run_dir = report_path.parent
            suffix = "" if len(report.get("strategies", {})) == 1 else f"_{strategy}"
            returns_csv = run_dir / f"returns{suffix}.csv"
            if returns_csv.exists():
                with open(returns_csv, encoding="utf-8") as fh:
                    next(fh)
                    for line in fh:
                        date, r, cw = line.strip().split(",")
                        rows.append((run_name, strategy, "returns", date, float(r)))
                        rows.append((run_name, strategy, "wealth", date, float(cw)))
    write_csv(out / "report_long.csv", ["run", "strategy", "series", "key", "value"], rows)
    print(f"wrote {out / 'report_long.csv'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resfolio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": "generate a synthetic market (prices.csv + market.json)",
        "extract": "emit the per-date residual panel and projection diagnostics",
        "train": "train a predictor checkpoint on the pre-split residual history",
        "backtest": "run the strategy roster and write the report bundle",
        "sweep-c": "reversal backtest across eliminated-component counts",
        "stability": "volatility-ratio curve around the window boundary",
        "report": "flatten report bundles into a plot-ready long CSV",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="TOML config path")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set window.C=5")
        if name == "report":
            p.add_argument("inputs", nargs="+", help="report.json files or run directories")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "report":
            cfg.problems = [p for p in cfg.problems if "'seed'" not in p]
            cfg.check()
            cmd_report(cfg, args.inputs)
        else:
            cfg.check()
            dispatch = {
                "simulate": cmd_simulate,
                "extract": cmd_extract,
                "train": cmd_train,
                "backtest": cmd_backtest,
                "sweep-c": cmd_sweep_c,
                "stability": cmd_stability,
            }
            dispatch[args.command](cfg)
    except (ResfolioError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
