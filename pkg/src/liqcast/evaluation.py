"""Rolling-origin out-of-sample evaluation and error-matrix assembly."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .data import SPLIT_TEST, AlignedDataset
from .errors import ContractError, SizingError

#: all reported MSEs are divided by this factor
MSE_SCALE = 1e7


@dataclass
class ForecastReport:
    """Per-horizon out-of-sample forecasts and their realized values."""

    model_name: str
    horizon: int
    origins: list[date]
    predictions: np.ndarray  # (n_origins, horizon)
    actuals: np.ndarray      # (n_origins, horizon)
    mse_raw: float
    mse_scaled: float


def rolling_origin(model, dataset: AlignedDataset, horizon: int) -> ForecastReport:
    """Forecast from every test origin, advancing one day at a time.

    The lookback window ends at the origin and may extend into the earlier
    splits (history is observable at decision time); the H-step targets all
    lie inside the test split.
    """
    horizon = int(horizon)
    test_idx = dataset.split_indices(SPLIT_TEST)
    if len(test_idx) == 0:
        raise SizingError("dataset has no test rows")
    if len(test_idx) < horizon:
        raise SizingError(f"test split has {len(test_idx)} rows, "
                          f"shorter than horizon {horizon}")
    if test_idx[-1] - test_idx[0] + 1 != len(test_idx):
        raise ContractError("test rows are not contiguous")
    first, last = int(test_idx[0]), int(test_idx[-1])
    lookback = model.lookback
    origin_rows = list(range(first - 1, last - horizon + 1))
    if origin_rows[0] - lookback + 1 < 0:
        raise SizingError(f"need {lookback} rows of history before the first "
                          f"test row, have {origin_rows[0] + 1}")
    windows = np.stack([dataset.prices[o - lookback + 1:o + 1] for o in origin_rows])
    exog = None
    if getattr(model, "uses_exogenous", False):
        exog = np.stack([dataset.exog[o - lookback + 1:o + 1] for o in origin_rows])
    predictions = model.predict(windows, exog, horizon=horizon)
    actuals = np.stack([dataset.prices[o + 1:o + 1 + horizon] for o in origin_rows])
    mse_raw = float(np.mean((predictions - actuals) ** 2))
    return ForecastReport(
        model_name=model.name,
        horizon=horizon,
        origins=[dataset.dates[o] for o in origin_rows],
        predictions=predictions,
        actuals=actuals,
        mse_raw=mse_raw,
        mse_scaled=mse_raw / MSE_SCALE,
    )


def score(report: ForecastReport) -> tuple[float, float]:
    """(mse_raw, mse_scaled) recomputed over all (origin, step) errors."""
    if len(report.origins) == 0:
        raise ContractError("cannot score an empty report")
    mse_raw = float(np.mean((report.predictions - report.actuals) ** 2))
    return mse_raw, mse_raw / MSE_SCALE


@dataclass
class ErrorMatrix:
    """Aligned per-point squared errors, one column per model.

    Points are ordered origin-major, step-minor, so consecutive points share
    the serial correlation the block bootstrap is meant to respect.
    """

    model_names: list[str]
    horizon: int
    origin_dates: list[date]  # per point
    steps: np.ndarray         # per point, 1-based forecast step
    data: np.ndarray          # (n_points, n_models)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.steps = np.asarray(self.steps, dtype=np.int64)
        if self.data.shape != (len(self.origin_dates), len(self.model_names)):
            raise ContractError(f"error matrix shape {self.data.shape} does not "
                                f"match points x models")

    @property
    def n_points(self) -> int:
        return self.data.shape[0]

    def column_means(self) -> dict[str, float]:
        return {name: float(self.data[:, j].mean())
                for j, name in enumerate(self.model_names)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["origin_date", "step"] + self.model_names)
            for i in range(self.n_points):
                w.writerow([self.origin_dates[i].isoformat(), int(self.steps[i])]
                           + [repr(float(v)) for v in self.data[i]])

    @classmethod
    def from_csv(cls, path, horizon: int) -> "ErrorMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["origin_date", "step"]:
                raise ContractError(f"{path}: expected origin_date,step,... header")
            names = header[2:]
            origins, steps, rows = [], [], []
            for rec in reader:
                origins.append(date.fromisoformat(rec[0]))
                steps.append(int(rec[1]))
                rows.append([float(v) for v in rec[2:]])
        return cls(names, horizon, origins, np.array(steps), np.array(rows))


def build_error_matrix(reports: Sequence[ForecastReport]) -> ErrorMatrix:
    """Stack reports into aligned squared-error columns.

    All reports must share the horizon, the origin list, and the realized
    values; the first mismatch is named in the error.
    """
    if not reports:
        raise ContractError("build_error_matrix needs at least one report")
    ref = reports[0]
    for rep in reports[1:]:
        if rep.horizon != ref.horizon:
            raise ContractError(f"{rep.model_name}: horizon {rep.horizon} != {ref.horizon}")
        if rep.origins != ref.origins:
            mismatch = next((i for i, (a, b) in enumerate(zip(ref.origins, rep.origins))
                             if a != b), min(len(ref.origins), len(rep.origins)))
            missing = (ref.origins[mismatch] if mismatch < len(ref.origins)
                       else rep.origins[mismatch])
            raise ContractError(f"{rep.model_name}: origins misaligned at {missing}")
        if not np.array_equal(rep.actuals, ref.actuals):
            raise ContractError(f"{rep.model_name}: realized values differ from "
                                f"{ref.model_name}'s")
    n_origins = len(ref.origins)
    h = ref.horizon
    cols = [((rep.predictions - rep.actuals) ** 2).reshape(-1) for rep in reports]
    origin_dates = [d for d in ref.origins for _ in range(h)]
    steps = np.tile(np.arange(1, h + 1), n_origins)
    return ErrorMatrix([rep.model_name for rep in reports], h,
                       origin_dates, steps, np.column_stack(cols))
