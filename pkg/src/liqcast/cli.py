"""Command-line entry point: ingest, train, evaluate, mcs, attention, grid.

One JSON experiment config drives every command; flags override file values
(precedence: flags > file > defaults). Exit codes: 0 success, 1 operational
error, 2 data-integrity (look-ahead) violation. All file outputs are written
atomically (temp + rename).
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import sys
import tempfile
import zlib
from contextlib import contextmanager
from datetime import date
from pathlib import Path

import click
import numpy as np

from . import data as dp
from . import mcs as mcs_mod
from .errors import LiqcastError
from .evaluation import ErrorMatrix, build_error_matrix, rolling_origin
from .models import (LinearConfig, LinearForecaster, NaiveConfig,
                     NaivePersistence, NBeatsConfig, NBeatsLite, TimeXer,
                     TimeXerConfig, extract_cross_attention, load_checkpoint,
                     save_checkpoint)
from .training import TrainConfig, instance_normalize, train

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_LOOKAHEAD = 2


@contextmanager
def atomic_output(path):
    """Yield a temp path that replaces ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload) -> None:
    with atomic_output(path) as tmp:
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------

class Experiment:
    """Parsed experiment config with flag overrides applied."""

    def __init__(self, raw: dict, seed=None, out=None):
        self.raw = raw
        self.seed = int(seed if seed is not None else raw.get("seed", 0))
        self.out_dir = Path(out if out is not None else raw.get("out_dir", "out"))
        self.horizons = [int(h) for h in raw.get("horizons", [7])]
        self.models = raw.get("models", {})
        self.data = raw.get("data", {})

    @classmethod
    def load(cls, config_path, seed=None, out=None) -> "Experiment":
        if config_path is None:
            raise LiqcastError("--config is required")
        with open(config_path) as fh:
            return cls(json.load(fh), seed=seed, out=out)

    # -- derived paths ------------------------------------------------------

    @property
    def dataset_path(self) -> Path:
        return Path(self.raw.get("dataset", self.out_dir / "dataset.csv"))

    def checkpoint_path(self, model: str, horizon: int) -> Path:
        return self.out_dir / f"{model}_h{horizon}.ckpt"

    def log_path(self, model: str, horizon: int) -> Path:
        return self.out_dir / f"{model}_h{horizon}.log.jsonl"

    def errors_path(self, horizon: int) -> Path:
        return self.out_dir / f"errors_h{horizon}.csv"

    # -- model construction --------------------------------------------------

    def model_seed(self, name: str, horizon: int) -> int:
        return self.seed * 1000003 + zlib.crc32(f"{name}:h{horizon}".encode())

    def build_model(self, name: str, horizon: int, n_exog: int,
                    overrides: dict | None = None):
        if name not in self.models:
            raise LiqcastError(f"model {name!r} not present in config")
        spec = dict(self.models[name])
        spec.pop("train", None)
        spec.update(overrides or {})
        mtype = spec.pop("type", "timexer")
        seed = self.model_seed(name, horizon)
        if mtype == "timexer":
            use_exog = bool(spec.pop("use_exogenous", True))
            cfg = TimeXerConfig(horizon=horizon, use_exogenous=use_exog,
                                n_exog=n_exog if use_exog else 0, **spec)
            return TimeXer(cfg, name=name, seed=seed)
        if mtype == "nbeats":
            return NBeatsLite(NBeatsConfig(horizon=horizon, **spec), name=name, seed=seed)
        if mtype == "linear":
            return LinearForecaster(LinearConfig(horizon=horizon, **spec), name=name, seed=seed)
        if mtype == "naive":
            return NaivePersistence(NaiveConfig(horizon=horizon, **spec), name=name, seed=seed)
        raise LiqcastError(f"unknown model type {mtype!r} for {name!r}")

    def train_config(self, name: str, overrides: dict | None = None) -> TrainConfig:
        spec = dict(self.models.get(name, {}).get("train", {}))
        spec.update(overrides or {})
        spec.setdefault("seed", self.seed)
        return TrainConfig(**spec)

    def load_dataset(self) -> dp.AlignedDataset:
        path = self.dataset_path
        if not path.exists():
            raise LiqcastError(f"dataset file not found: {path} (run `liqcast ingest`)")
        return dp.AlignedDataset.from_csv(path)


def _parse_split(spec: dict) -> dp.SplitSpec:
    ref = spec.get("reference_date")
    return dp.SplitSpec(
        train_start=date.fromisoformat(spec["train_start"]),
        train_end=date.fromisoformat(spec["train_end"]),
        val_start=date.fromisoformat(spec["val_start"]),
        val_end=date.fromisoformat(spec["val_end"]),
        test_start=date.fromisoformat(spec["test_start"]),
        test_end=date.fromisoformat(spec["test_end"]),
        reference_date=date.fromisoformat(ref) if ref else None,
    )


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _load_pre_aggregated(path) -> tuple[dp.RawSeries, dp.GlobalLiquiditySeries]:
    """Pre-aggregated input: CSV with date,bitcoin_price,global columns."""
    dates, prices, liquidity = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"date", "bitcoin_price", "global"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise LiqcastError(f"{path}: pre-aggregated file needs columns "
                               f"date,bitcoin_price,global")
        for rec in reader:
            dates.append(date.fromisoformat(rec["date"]))
            prices.append(float(rec["bitcoin_price"]))
            liquidity.append(float(rec["global"]))
    target = dp.RawSeries("bitcoin", dates, np.array(prices))
    raw_global = dp.GlobalLiquiditySeries(
        dates, np.array(liquidity), np.array([d.toordinal() for d in dates]))
    return target, raw_global


def _load_national_series(exp: Experiment):
    cfg = exp.data
    rejections: dict[str, int] = {}
    drops: dict[str, int] = {}
    m2_dir = Path(cfg["m2_dir"])
    fx_dir = Path(cfg["fx_dir"]) if cfg.get("fx_dir") else None
    strict = bool(cfg.get("strict", False))
    constituents = []
    for m2_file in sorted(m2_dir.glob("*.csv")):
        res = dp.load_csv(m2_file, strict=strict)
        rejections[res.series.name] = len(res.rejections)
        series = res.series
        fx_file = fx_dir / m2_file.name if fx_dir else None
        if fx_file is not None and fx_file.exists():
            fx = dp.load_csv(fx_file, strict=strict).series
            conv = dp.convert_to_usd(series, fx)
            series = conv.series
            drops[series.name] = len(conv.dropped_dates)
        # no FX file: series is taken to be USD-denominated already
        constituents.append(series)
    if not constituents:
        raise LiqcastError(f"no m2 CSV files found under {m2_dir}")
    btc = dp.load_csv(cfg["bitcoin"], name="bitcoin", strict=strict)
    rejections["bitcoin"] = len(btc.rejections)
    start = min(s.dates[0] for s in constituents)
    end = max(btc.series.dates[-1], max(s.dates[-1] for s in constituents))
    raw_global = dp.aggregate_global(constituents, dp.daily_range(start, end))
    return btc.series, raw_global, rejections, drops


def run_ingest(exp: Experiment) -> tuple[int, dict]:
    cfg = exp.data
    rejections, drops = {}, {}
    if cfg.get("pre_aggregated"):
        target, raw_global = _load_pre_aggregated(cfg["pre_aggregated"])
    else:
        target, raw_global, rejections, drops = _load_national_series(exp)
    shift_days = int(cfg.get("shift_days", dp.DEFAULT_SHIFT_DAYS))
    offsets = [int(k) for k in cfg.get("lag_offsets", dp.DEFAULT_LAG_OFFSETS)]
    ref = cfg.get("reference_date")
    reference_date = date.fromisoformat(ref) if ref else None

    shifted = dp.apply_lead_shift(raw_global, shift_days)
    dataset = dp.build_lag_features(shifted, target, offsets, reference_date)
    counts = {}
    if cfg.get("split"):
        dataset, counts = dp.split(dataset, _parse_split(cfg["split"]))
    audit_ref = reference_date if reference_date is not None else dataset.dates[-1]
    audit = dp.audit_no_lookahead(dataset, shift_days, audit_ref)

    with atomic_output(exp.dataset_path) as tmp:
        dataset.to_csv(tmp)
    report = {
        "rows": len(dataset),
        "split_counts": counts,
        "rejections": rejections,
        "conversion_drops": drops,
        "violations": len(audit.violations),
        "lookahead": audit.to_dict(),
    }
    write_json(exp.out_dir / "audit.json", report)
    return (EXIT_OK if audit.ok else EXIT_LOOKAHEAD), report


# ---------------------------------------------------------------------------
# training / evaluation / mcs / attention
# ---------------------------------------------------------------------------

def run_train(exp: Experiment, model_name: str, horizon: int,
              overrides: dict | None = None, train_overrides: dict | None = None):
    dataset = exp.load_dataset()
    n_exog = dataset.exog.shape[1]
    model = exp.build_model(model_name, horizon, n_exog, overrides)
    result = train(model, dataset, horizon, exp.train_config(model_name, train_overrides))
    save_checkpoint(model, exp.checkpoint_path(model_name, horizon))
    with atomic_output(exp.log_path(model_name, horizon)) as tmp:
        with open(tmp, "w") as fh:
            for rec in result.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return result


def _load_trained(exp: Experiment, model_name: str, horizon: int):
    path = exp.checkpoint_path(model_name, horizon)
    if not path.exists():
        raise LiqcastError(f"missing checkpoint for {model_name} at horizon "
                           f"{horizon}: {path} (run `liqcast train`)")
    return load_checkpoint(path)


def run_evaluate(exp: Experiment) -> dict:
    dataset = exp.load_dataset()
    names = list(exp.models)
    table: dict[int, dict[str, float]] = {}
    for horizon in exp.horizons:
        reports = []
        for name in names:
            model = _load_trained(exp, name, horizon)
            report = rolling_origin(model, dataset, horizon)
            reports.append(report)
            dump = exp.out_dir / f"predictions_{name}_h{horizon}.csv"
            with atomic_output(dump) as tmp:
                with open(tmp, "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["origin_date", "step", "prediction", "actual"])
                    for i, origin in enumerate(report.origins):
                        for j in range(horizon):
                            w.writerow([origin.isoformat(), j + 1,
                                        repr(float(report.predictions[i, j])),
                                        repr(float(report.actuals[i, j]))])
        errors = build_error_matrix(reports)
        with atomic_output(exp.errors_path(horizon)) as tmp:
            errors.to_csv(tmp)
        table[horizon] = {r.model_name: r.mse_scaled for r in reports}
    with atomic_output(exp.out_dir / "results.csv") as tmp:
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["horizon"] + names)
            for horizon in exp.horizons:
                w.writerow([horizon] + [f"{table[horizon][n]:.3f}" for n in names])
    return table


def run_mcs(exp: Experiment) -> mcs_mod.McsTable:
    spec = dict(exp.raw.get("mcs", {}))
    spec.setdefault("seed", exp.seed)
    base = mcs_mod.McsConfig(**spec)
    results = {}
    traces = {}
    for horizon in exp.horizons:
        path = exp.errors_path(horizon)
        if not path.exists():
            raise LiqcastError(f"missing error matrix {path} (run `liqcast evaluate`)")
        errors = ErrorMatrix.from_csv(path, horizon)
        res = mcs_mod.mcs_run(errors, base)
        results[horizon] = res
        traces[str(horizon)] = {
            "elimination": [{"model": m, "p": p} for m, p in res.elimination_order],
            "surviving_set": res.surviving_set,
            "p_values": res.p_values,
            "tied": res.tied,
        }
    table = mcs_mod.mcs_table(results, model_names=list(exp.models), alpha=base.alpha)
    with atomic_output(exp.out_dir / "mcs_pvalues.csv") as tmp:
        table.to_csv(tmp)
    write_json(exp.out_dir / "mcs_trace.json", traces)
    return table


def run_attention(exp: Experiment, model_name: str, horizon: int, layer: int) -> Path:
    dataset = exp.load_dataset()
    model = _load_trained(exp, model_name, horizon)
    if not getattr(model, "uses_exogenous", False):
        raise LiqcastError(f"{model_name} has no exogenous cross-attention")
    test_rows = dataset.split_indices(dp.SPLIT_TEST)
    origin = int(test_rows[-1]) if len(test_rows) else len(dataset) - 1
    lb = model.lookback
    if origin - lb + 1 < 0:
        raise LiqcastError(f"not enough history for a lookback of {lb}")
    window = dataset.prices[origin - lb + 1:origin + 1]
    exog = dataset.exog[origin - lb + 1:origin + 1]
    norm_w, _ = instance_normalize(window[None, :])
    norm_e = model.exog_scaler.transform(exog)[None, ...]
    record = extract_cross_attention(model, norm_w[0], norm_e[0], layer,
                                     key_labels=dataset.exog_names)
    out = exp.out_dir / f"attention_{model_name}_h{horizon}_layer{layer}.csv"
    avg = record.head_averaged()
    with atomic_output(out) as tmp:
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variate_label", "mean_weight"])
            for label, weight in zip(record.key_labels, avg):
                w.writerow([label, repr(float(weight))])
    return out


def run_grid(exp: Experiment) -> Path:
    spec = exp.raw.get("grid")
    if not spec:
        raise LiqcastError("config has no 'grid' section")
    model_name = spec["model"]
    horizon = int(spec["horizon"])
    axes = spec.get("params", {})
    model_keys = {"dropout", "d_model", "n_layers", "patch_len", "stride",
                  "n_heads", "d_ff", "lookback", "hidden", "n_blocks",
                  "block_layers"}
    names = list(axes)
    rows = []
    for combo in itertools.product(*(axes[k] for k in names)):
        assignment = dict(zip(names, combo))
        overrides = {k: v for k, v in assignment.items() if k in model_keys}
        train_over = {k: v for k, v in assignment.items() if k not in model_keys}
        result = run_train(exp, model_name, horizon, overrides, train_over)
        rows.append(list(combo) + [result.best_val_mse, result.best_epoch])
    out = exp.out_dir / f"grid_{model_name}_h{horizon}.csv"
    with atomic_output(out) as tmp:
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + ["val_mse", "best_epoch"])
            for row in rows:
                w.writerow(row)
    return out


# ---------------------------------------------------------------------------
# click wiring
# ---------------------------------------------------------------------------

def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except LiqcastError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)


config_option = click.option("--config", "config_path", type=click.Path(), default=None,
                             help="Experiment config JSON.")
seed_option = click.option("--seed", type=int, default=None, help="Override config seed.")
out_option = click.option("--out", type=click.Path(), default=None,
                          help="Override output directory.")


@click.group()
def main():
    """Liquidity-conditioned long-horizon forecasting toolkit."""


@main.command()
@config_option
@seed_option
@out_option
def ingest(config_path, seed, out):
    """Build the aligned dataset and run the look-ahead audit."""
    exp = _run(Experiment.load, config_path, seed, out)
    code, report = _run(run_ingest, exp)
    click.echo(f"dataset rows: {report['rows']}  violations: {report['violations']}")
    sys.exit(code)


@main.command("train")
@config_option
@seed_option
@out_option
@click.option("--model", "model_name", required=True)
@click.option("--horizon", type=int, required=True)
def train_cmd(config_path, seed, out, model_name, horizon):
    """Fit one model for one horizon; writes checkpoint + JSONL log."""
    exp = _run(Experiment.load, config_path, seed, out)
    result = _run(run_train, exp, model_name, horizon)
    click.echo(f"trained {model_name} h={horizon}: best val MSE "
               f"{result.best_val_mse:.6g} (epoch {result.best_epoch})")


@main.command()
@config_option
@seed_option
@out_option
def evaluate(config_path, seed, out):
    """Rolling-origin evaluation of every (model, horizon) pair."""
    exp = _run(Experiment.load, config_path, seed, out)
    table = _run(run_evaluate, exp)
    for horizon, row in table.items():
        cells = "  ".join(f"{name}={val:.3f}" for name, val in row.items())
        click.echo(f"h={horizon}: {cells}")


@main.command()
@config_option
@seed_option
@out_option
def mcs(config_path, seed, out):
    """Model confidence set over the evaluate-stage error matrices."""
    exp = _run(Experiment.load, config_path, seed, out)
    table = _run(run_mcs, exp)
    click.echo(f"wrote MCS p-values for horizons {table.horizons}")


@main.command()
@config_option
@seed_option
@out_option
@click.option("--model", "model_name", required=True)
@click.option("--horizon", type=int, required=True)
@click.option("--layer", type=int, default=0, show_default=True)
def attention(config_path, seed, out, model_name, horizon, layer):
    """Head-averaged cross-attention weights for one layer."""
    exp = _run(Experiment.load, config_path, seed, out)
    path = _run(run_attention, exp, model_name, horizon, layer)
    click.echo(f"wrote {path}")


@main.command()
@config_option
@seed_option
@out_option
def grid(config_path, seed, out):
    """Small hyperparameter grid over the config's 'grid' section."""
    exp = _run(Experiment.load, config_path, seed, out)
    path = _run(run_grid, exp)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
