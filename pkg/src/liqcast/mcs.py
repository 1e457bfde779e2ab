"""Model Confidence Set with a moving-block bootstrap.

Implements the iterative equal-predictive-ability elimination: at each
round the relative statistic t_i = dbar_i / se(dbar_i) is formed from each
surviving model's mean loss differential against the surviving-set average,
with the standard error and the null distribution of T = max_i t_i both
taken from the same recentered block-bootstrap replicates. The model with
the largest statistic is eliminated and records the running maximum of
round p-values as its MCS p-value; the set at confidence 1-alpha is every
model whose p-value reaches alpha.

Rounds with no variance to test against (all differentials identical) are
ties: nothing is eliminated and the remaining models keep p = 1.0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ContractError
from .evaluation import ErrorMatrix
from .kernels import resampled_means

__all__ = [
    "McsConfig",
    "McsResult",
    "McsTable",
    "PairwiseDifferentials",
    "loss_differentials",
    "block_bootstrap_indices",
    "mcs_run",
    "mcs_table",
]


@dataclass
class McsConfig:
    alpha: float = 0.10
    n_bootstrap: int = 5000
    block_size: Optional[int] = None  # None: use the report horizon
    seed: int = 0
    statistic: str = "t_max"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.n_bootstrap < 100:
            raise ContractError(f"n_bootstrap must be >= 100, got {self.n_bootstrap}")
        if self.block_size is not None and self.block_size < 1:
            raise ContractError(f"block_size must be >= 1, got {self.block_size}")
        if self.statistic != "t_max":
            raise ContractError(f"unsupported statistic {self.statistic!r}")


@dataclass
class McsResult:
    """Elimination record for one horizon."""

    model_names: list[str]
    alpha: float
    elimination_order: list[tuple[str, float]]  # (model, p at elimination)
    p_values: dict[str, float]
    tied: bool = False  # a degenerate-variance round stopped elimination

    @property
    def surviving_set(self) -> list[str]:
        return [m for m in self.model_names if self.p_values[m] >= self.alpha]


@dataclass
class PairwiseDifferentials:
    model_names: list[str]
    d: np.ndarray       # (n_points, m, m), d[t, i, j] = L_i,t - L_j,t
    means: np.ndarray   # (m, m)


def loss_differentials(errors: ErrorMatrix) -> PairwiseDifferentials:
    """All ordered-pair loss differential series and their means."""
    L = errors.data
    n, m = L.shape
    if m < 2:
        raise ContractError(f"need at least 2 models, got {m}")
    if n < 2:
        raise ContractError(f"need at least 2 evaluation points, got {n}")
    d = L[:, :, None] - L[:, None, :]
    return PairwiseDifferentials(list(errors.model_names), d, d.mean(axis=0))


def _start_matrix(n: int, block_size: int, n_replicates: int,
                  rng: np.random.Generator) -> np.ndarray:
    n_blocks = -(-n // block_size)  # ceil
    return rng.integers(0, n - block_size + 1, size=(n_replicates, n_blocks))


def _expand_blocks(starts: np.ndarray, n: int, block_size: int) -> np.ndarray:
    idx = starts[..., None] + np.arange(block_size)
    return idx.reshape(starts.shape[0], -1)[:, :n]


def block_bootstrap_indices(n: int, block_size: int,
                            rng: np.random.Generator) -> np.ndarray:
    """One moving-block resample: uniform block starts in [0, n-b],
    consecutive indices appended and truncated to length n."""
    if not 1 <= block_size <= n:
        raise ContractError(f"block_size {block_size} outside [1, {n}]")
    starts = _start_matrix(n, block_size, 1, rng)
    return _expand_blocks(starts, n, block_size)[0]


def _t_stats(dbar: np.ndarray, se: np.ndarray) -> np.ndarray:
    t = np.zeros_like(dbar)
    pos = se > 0.0
    t[pos] = dbar[pos] / se[pos]
    deg = ~pos & (dbar != 0.0)
    t[deg] = np.sign(dbar[deg]) * np.inf
    return t


def mcs_run(errors: ErrorMatrix, cfg: McsConfig) -> McsResult:
    """Run the full elimination sequence and assign MCS p-values.

    Every model's p-value is the running maximum of round p-values up to and
    including its own elimination; the final survivor gets exactly 1.0.
    Deterministic given cfg.seed.
    """
    L = errors.data
    n, m = L.shape
    if m < 2:
        raise ContractError(f"MCS needs at least 2 models, got {m}")
    if n < 2:
        raise ContractError(f"MCS needs at least 2 evaluation points, got {n}")
    block = cfg.block_size if cfg.block_size is not None else int(errors.horizon)
    if not 1 <= block <= n:
        raise ContractError(f"block size {block} outside [1, {n}]")
    names = list(errors.model_names)

    rng = np.random.default_rng(cfg.seed)
    idx = _expand_blocks(_start_matrix(n, block, cfg.n_bootstrap, rng), n, block)
    boot_means = resampled_means(L, idx)  # (R, m) per-replicate column means
    grand_means = L.mean(axis=0)

    alive = list(range(m))
    p_values: dict[str, float] = {}
    elimination: list[tuple[str, float]] = []
    running = 0.0
    tied = False
    while len(alive) > 1:
        sel = np.array(alive)
        dbar = grand_means[sel] - grand_means[sel].mean()
        boot_d = boot_means[:, sel] - boot_means[:, sel].mean(axis=1, keepdims=True)
        zeta = boot_d - dbar  # recentered: replicates sample the EPA null
        se = np.sqrt((zeta ** 2).mean(axis=0))
        if not np.any(se > 0.0):
            tied = True
            break
        t = _t_stats(dbar, se)
        worst = int(np.argmax(t))
        t_obs = float(t[worst])
        with np.errstate(invalid="ignore"):
            t_star = np.where(se > 0.0, zeta / np.where(se > 0.0, se, 1.0), 0.0)
        p_round = float(np.mean(t_star.max(axis=1) >= t_obs))
        running = max(running, p_round)
        name = names[alive[worst]]
        p_values[name] = running
        elimination.append((name, running))
        alive.pop(worst)
    for i in alive:
        p_values[names[i]] = 1.0
    return McsResult(model_names=names, alpha=cfg.alpha,
                     elimination_order=elimination, p_values=p_values, tied=tied)


@dataclass
class McsTable:
    """Horizons x models grid of MCS p-values (3-decimal presentation)."""

    horizons: list[int]
    model_names: list[str]
    p_values: np.ndarray  # (n_horizons, n_models)
    alpha: float = 0.10

    def survives(self) -> np.ndarray:
        return self.p_values >= self.alpha

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["horizon"] + self.model_names)
            for i, h in enumerate(self.horizons):
                w.writerow([h] + [f"{v:.3f}" for v in self.p_values[i]])

    @classmethod
    def from_csv(cls, path, alpha: float = 0.10) -> "McsTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:1] != ["horizon"]:
                raise ContractError(f"{path}: expected horizon,... header")
            horizons, rows = [], []
            for rec in reader:
                horizons.append(int(rec[0]))
                rows.append([float(v) for v in rec[1:]])
        return cls(horizons, header[1:], np.array(rows), alpha)


def mcs_table(results: Mapping[int, McsResult],
              model_names: Optional[Sequence[str]] = None,
              alpha: float = 0.10) -> McsTable:
    """Assemble per-horizon results into the presentation grid."""
    horizons = sorted(results)
    if model_names is None:
        model_names = results[horizons[0]].model_names
    grid = np.array([[round(results[h].p_values[m], 3) for m in model_names]
                     for h in horizons])
    return McsTable(list(horizons), list(model_names), grid, alpha)
