"""Loss, Adam, instance normalization, and the early-stopped training loop.

The endogenous lookback window is z-scored per sample and the statistics are
inverted on the model output (so forecasts live on the raw price scale);
exogenous columns are z-scored with training-split statistics frozen when
the scaler is fit. The optimization loss is computed on the per-sample
normalized scale, which makes training exactly equivariant under a positive
rescaling of the data; validation and all reported MSEs are on the raw
scale.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .data import SPLIT_TRAIN, SPLIT_VALIDATION, AlignedDataset
from .errors import ContractError, OptimizationError, SizingError

STD_FLOOR = 1e-8


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 5e-5  # midpoint of the published log-uniform range
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ContractError(f"patience must be >= 1, got {self.patience}")
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ContractError(f"max_epochs must be >= 1, got {self.max_epochs}")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass
class NormState:
    """Per-sample mean/std of the endogenous lookback window."""

    mean: np.ndarray  # (B, 1)
    std: np.ndarray   # (B, 1), floored at STD_FLOOR


def instance_normalize(windows: np.ndarray) -> tuple[np.ndarray, NormState]:
    windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    mean = windows.mean(axis=1, keepdims=True)
    std = np.maximum(windows.std(axis=1, keepdims=True), STD_FLOOR)
    return (windows - mean) / std, NormState(mean, std)


def denormalize(values: np.ndarray, state: NormState) -> np.ndarray:
    return np.asarray(values) * state.std + state.mean


def normalize_targets(targets: np.ndarray, state: NormState) -> np.ndarray:
    return (np.asarray(targets) - state.mean) / state.std


class ExogScaler:
    """Column z-scoring with statistics frozen from the training split."""

    def __init__(self, means: np.ndarray, stds: np.ndarray):
        self.means = np.asarray(means, dtype=np.float64)
        self.stds = np.maximum(np.asarray(stds, dtype=np.float64), STD_FLOOR)

    @classmethod
    def fit(cls, exog_rows: np.ndarray) -> "ExogScaler":
        exog_rows = np.asarray(exog_rows, dtype=np.float64)
        return cls(exog_rows.mean(axis=0), exog_rows.std(axis=0))

    def transform(self, exog: np.ndarray) -> np.ndarray:
        return (np.asarray(exog, dtype=np.float64) - self.means) / self.stds

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ExogScaler":
        return cls(np.array(d["means"]), np.array(d["stds"]))


def normalize(windows: np.ndarray, exog: Optional[np.ndarray] = None,
              exog_scaler: Optional[ExogScaler] = None):
    """Per-sample z-scoring of the endogenous window plus frozen-statistics
    scaling of the exogenous columns. Returns ((windows, exog), state)."""
    norm_w, state = instance_normalize(windows)
    norm_e = None
    if exog is not None:
        norm_e = exog_scaler.transform(exog) if exog_scaler is not None else np.asarray(exog)
    return (norm_w, norm_e), state


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def mse(y, y_hat) -> Tensor:
    """Mean squared error as a graph scalar; gradient wrt y_hat is 2(y_hat-y)/n."""
    y = y if isinstance(y, Tensor) else Tensor(y)
    y_hat = y_hat if isinstance(y_hat, Tensor) else Tensor(y_hat)
    if y.shape != y_hat.shape:
        raise ContractError(f"mse: shapes {y.shape} and {y_hat.shape} differ")
    if y.size == 0:
        raise ContractError("mse of empty tensors")
    diff = ad.sub(y_hat, y)
    return ad.mean_all(ad.mul(diff, diff))


def mse_value(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ContractError(f"mse: shapes {a.shape} and {b.shape} differ")
    return float(np.mean((a - b) ** 2))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()})


def adam_step(params: dict[str, Tensor], grads: dict[str, Optional[np.ndarray]],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, applied in place. Missing gradients
    count as zero; non-finite gradients abort naming the parameter."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite gradient for parameter {name!r} "
                                    f"at step {t}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------

class EarlyStopper:
    """Track the best validation loss and its weights; stop after
    ``patience`` consecutive non-improving evaluations."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_value = np.inf
        self.best_epoch = 0
        self.best_params: Optional[dict[str, np.ndarray]] = None
        self._bad = 0

    def observe(self, epoch: int, value: float, params: dict[str, Tensor]) -> bool:
        """Record one evaluation; returns True when training should stop."""
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.best_params = {k: p.data.copy() for k, p in params.items()}
            self._bad = 0
            return False
        self._bad += 1
        return self._bad >= self.patience

    def restore(self, params: dict[str, Tensor]) -> None:
        if self.best_params is None:
            return
        for k, p in params.items():
            p.data[...] = self.best_params[k]


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: object
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    best_val_mse: float = np.inf
    exog_scaler: Optional[ExogScaler] = None
    gradient_rows: Optional[np.ndarray] = None  # rows touched by gradient batches


def _window_origins(dataset: AlignedDataset, lookback: int, horizon: int):
    """(train_origins, val_origins): origin o is the last observed row; the
    window is rows [o-L+1, o] and the targets rows [o+1, o+H]."""
    labels = dataset.split_labels
    train_rows = np.flatnonzero(labels == SPLIT_TRAIN)
    val_rows = np.flatnonzero(labels == SPLIT_VALIDATION)
    if len(train_rows) == 0 or len(val_rows) == 0:
        raise SizingError("dataset needs non-empty train and validation splits")
    t0, t1 = int(train_rows[0]), int(train_rows[-1])
    v0, v1 = int(val_rows[0]), int(val_rows[-1])
    train_origins = np.arange(t0 + lookback - 1, t1 - horizon + 1)
    val_origins = np.arange(max(v0 - 1, lookback - 1), v1 - horizon + 1)
    if len(train_origins) == 0:
        raise SizingError(f"training split too short: need at least "
                          f"{lookback + horizon} consecutive rows")
    if len(val_origins) == 0:
        raise SizingError(f"validation split too short for horizon {horizon}")
    return train_origins, val_origins


def _gather(dataset: AlignedDataset, origins: np.ndarray, lookback: int,
            horizon: int, with_exog: bool):
    w_idx = origins[:, None] - lookback + 1 + np.arange(lookback)
    t_idx = origins[:, None] + 1 + np.arange(horizon)
    windows = dataset.prices[w_idx]
    targets = dataset.prices[t_idx]
    exog = dataset.exog[w_idx] if with_exog else None
    return windows, targets, exog, w_idx, t_idx


def _validation_mse(model, dataset, origins, lookback, horizon, batch_size,
                    scaler) -> float:
    total, count = 0.0, 0
    for start in range(0, len(origins), batch_size):
        sel = origins[start:start + batch_size]
        windows, targets, exog, _, _ = _gather(dataset, sel, lookback, horizon,
                                               model.uses_exogenous)
        (nw, ne), state = normalize(windows, exog, scaler)
        pred = denormalize(model.forward(nw, ne, training=False).data, state)
        total += float(((pred - targets) ** 2).sum())
        count += pred.size
    return total / count


def train(model, dataset: AlignedDataset, horizon: int, cfg: TrainConfig) -> TrainResult:
    """Fit one model for one horizon with early stopping on validation MSE.

    Gradient batches are drawn from the train split only (windows and
    targets); validation forecasts may look back into the train split, as at
    deployment time. Fully reproducible given cfg.seed.
    """
    if horizon != model.horizon:
        raise ContractError(f"model was built for horizon {model.horizon}, "
                            f"asked to train for {horizon}")
    lookback = model.lookback
    params = model.parameters()
    scaler = None
    if model.uses_exogenous:
        scaler = ExogScaler.fit(dataset.exog[dataset.split_indices(SPLIT_TRAIN)])
        model.exog_scaler = scaler

    train_origins, val_origins = _window_origins(dataset, lookback, horizon)
    result = TrainResult(model=model, exog_scaler=scaler,
                         gradient_rows=np.zeros(len(dataset), dtype=bool))

    if not params:  # e.g. naive persistence: nothing to fit
        val = _validation_mse(model, dataset, val_origins, lookback, horizon,
                              cfg.batch_size, scaler)
        result.log.append({"epoch": 1, "train_mse": None, "val_mse": val,
                           "lr": cfg.learning_rate, "elapsed_ms": 0.0})
        result.best_epoch = result.stopped_epoch = 1
        result.best_val_mse = val
        return result

    rng = np.random.default_rng(cfg.seed)
    adam = AdamState.for_params(params)
    stopper = EarlyStopper(cfg.patience)

    for epoch in range(1, cfg.max_epochs + 1):
        tic = time.perf_counter()
        perm = rng.permutation(len(train_origins))
        sq_err_sum, n_pred = 0.0, 0
        for start in range(0, len(perm), cfg.batch_size):
            sel = train_origins[perm[start:start + cfg.batch_size]]
            windows, targets, exog, w_idx, t_idx = _gather(
                dataset, sel, lookback, horizon, model.uses_exogenous)
            result.gradient_rows[w_idx.reshape(-1)] = True
            result.gradient_rows[t_idx.reshape(-1)] = True
            (nw, ne), state = normalize(windows, exog, scaler)
            t_norm = normalize_targets(targets, state)
            for p in params.values():
                p.grad = None
            with Tape() as tape:
                pred = model.forward(nw, ne, training=True, rng=rng)
                loss = mse(Tensor(t_norm), pred)
            tape.backward(loss)
            adam_step(params, {k: p.grad for k, p in params.items()}, adam,
                      cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
            raw_pred = denormalize(pred.data, state)
            sq_err_sum += float(((raw_pred - targets) ** 2).sum())
            n_pred += raw_pred.size
        val = _validation_mse(model, dataset, val_origins, lookback, horizon,
                              cfg.batch_size, scaler)
        result.log.append({
            "epoch": epoch,
            "train_mse": sq_err_sum / n_pred,
            "val_mse": val,
            "lr": cfg.learning_rate,
            "elapsed_ms": (time.perf_counter() - tic) * 1e3,
        })
        result.stopped_epoch = epoch
        if stopper.observe(epoch, val, params):
            break

    stopper.restore(params)
    result.best_epoch = stopper.best_epoch
    result.best_val_mse = stopper.best_value
    return result
