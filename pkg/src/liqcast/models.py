"""Forecasting model zoo with a uniform direct multi-step interface.

All models consume an endogenous lookback window (and, for the
exogenous-conditioned variant, a lookback-by-variate exogenous matrix) and
emit all H future values in one forward pass. ``forward`` operates on
already-normalized inputs and participates in gradient recording;
``predict`` wraps it with per-sample instance normalization and the frozen
exogenous scaling for raw-scale forecasting.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CheckpointError, ContractError, DimensionError
from .training import ExogScaler, denormalize, normalize

__all__ = [
    "TimeXerConfig",
    "TimeXer",
    "NBeatsConfig",
    "NBeatsLite",
    "LinearConfig",
    "LinearForecaster",
    "NaiveConfig",
    "NaivePersistence",
    "AttentionRecord",
    "extract_cross_attention",
    "naive_forecast",
    "save_checkpoint",
    "load_checkpoint",
    "config_hash",
]


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Uniform init scaled by 1/sqrt(fan_in): keeps pre-softmax logits O(1)
    at depth."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x[N, in] @ w[in, out] + b, with the bias tiled explicitly."""
    out = ad.matmul(x, w)
    bias = ad.repeat(ad.reshape(b, (1, b.size)), out.shape[0], 0)
    return ad.add(out, bias)


def _dropout(x: Tensor, p: float, training: bool,
             rng: Optional[np.random.Generator]) -> Tensor:
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode forward with dropout needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return ad.mul(x, Tensor(mask))


def extract_patches(windows: np.ndarray, patch_len: int, stride: int) -> np.ndarray:
    """(B, L) -> (B, n_patches, patch_len) strided patch views, copied."""
    b, length = windows.shape
    n_patches = (length - patch_len) // stride + 1
    w = np.ascontiguousarray(windows)
    s0, s1 = w.strides
    view = np.lib.stride_tricks.as_strided(
        w, shape=(b, n_patches, patch_len), strides=(s0, s1 * stride, s1))
    return view.copy()


class Forecaster:
    """Base class: named parameters plus the forward/forecast/predict trio."""

    model_type = "base"
    uses_exogenous = False

    def __init__(self, name: str, lookback: int, horizon: int):
        self.name = name
        self.lookback = int(lookback)
        self.horizon = int(horizon)
        self._params: dict[str, Tensor] = {}
        self.exog_scaler: Optional[ExogScaler] = None

    def parameters(self) -> dict[str, Tensor]:
        return self._params

    def forward(self, windows: np.ndarray, exog: Optional[np.ndarray] = None,
                training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        raise NotImplementedError

    def _check_inputs(self, windows: np.ndarray, exog) -> np.ndarray:
        windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        if windows.shape[1] != self.lookback:
            raise DimensionError(f"{self.name}: window length {windows.shape[1]} "
                                 f"!= lookback {self.lookback}")
        if self.uses_exogenous and exog is None:
            raise ContractError(f"{self.name} requires an exogenous window")
        return windows

    def forecast(self, window: np.ndarray, exog: Optional[np.ndarray] = None) -> np.ndarray:
        """Eval-mode forward on the given (already scaled) inputs."""
        arr = np.asarray(window, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
            if exog is not None:
                exog = np.asarray(exog)[None, ...]
        out = self.forward(arr, exog, training=False).data
        return out[0] if single else out

    def predict(self, windows: np.ndarray, exog: Optional[np.ndarray] = None,
                horizon: Optional[int] = None) -> np.ndarray:
        """Raw-scale forecasting: instance-normalize, forward, denormalize."""
        if horizon is not None and int(horizon) != self.horizon:
            raise ContractError(f"{self.name} was built for horizon {self.horizon}, "
                                f"asked for {horizon}")
        windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        if self.uses_exogenous:
            if exog is None:
                raise ContractError(f"{self.name} requires an exogenous window")
            if self.exog_scaler is None:
                raise ContractError(f"{self.name} has no fitted exogenous scaler; "
                                    f"train or load a checkpoint first")
        (nw, ne), state = normalize(windows, exog if self.uses_exogenous else None,
                                    self.exog_scaler)
        pred = self.forward(nw, ne, training=False)
        return denormalize(pred.data, state)


# ---------------------------------------------------------------------------
# TimeXer
# ---------------------------------------------------------------------------

@dataclass
class TimeXerConfig:
    """Patch/global/variate-token transformer configuration.

    Defaults are the published full-scale values; the stride of 8 with patch
    length 96 yields overlapping patches (stride governs; set
    stride == patch_len for strictly non-overlapping patches).
    """

    horizon: int
    lookback: int = 256
    patch_len: int = 96
    stride: int = 8
    d_model: int = 128
    n_layers: int = 16
    n_heads: int = 8
    d_ff: int = 512
    dropout: float = 0.30
    use_exogenous: bool = True
    n_exog: int = 0

    def __post_init__(self):
        if self.patch_len > self.lookback:
            raise ContractError(f"patch_len {self.patch_len} exceeds lookback {self.lookback}")
        if self.stride < 1:
            raise ContractError(f"stride must be >= 1, got {self.stride}")
        if self.d_model % self.n_heads != 0:
            raise ContractError(f"d_model {self.d_model} not divisible by "
                                f"n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.use_exogenous and self.n_exog < 1:
            raise ContractError("use_exogenous requires n_exog >= 1")
        if self.horizon < 1 or self.lookback < 1:
            raise ContractError("horizon and lookback must be positive")

    @property
    def n_patches(self) -> int:
        return (self.lookback - self.patch_len) // self.stride + 1

    @classmethod
    def published_exogenous(cls, horizon: int, n_exog: int) -> "TimeXerConfig":
        return cls(horizon=horizon, use_exogenous=True, n_exog=n_exog, dropout=0.30)

    @classmethod
    def published_endogenous(cls, horizon: int) -> "TimeXerConfig":
        return cls(horizon=horizon, use_exogenous=False, n_exog=0, dropout=0.25)


@dataclass
class AttentionRecord:
    """Cross-attention weights of one layer for a single input."""

    layer: int
    weights: np.ndarray  # (n_heads, n_queries, n_keys)
    key_labels: list[str]

    def head_averaged(self) -> np.ndarray:
        """Mean over heads for the single global-token query: (n_keys,)."""
        return self.weights.mean(axis=0)[0]


class TimeXer(Forecaster):
    """Patch tokens + learnable global token, per-layer self-attention, and
    (optionally) variate-token cross-attention routed through the global
    token."""

    model_type = "timexer"

    def __init__(self, cfg: TimeXerConfig, name: Optional[str] = None, seed: int = 0):
        super().__init__(name or ("timexer_exog" if cfg.use_exogenous else "timexer"),
                         cfg.lookback, cfg.horizon)
        self.cfg = cfg
        self.uses_exogenous = cfg.use_exogenous
        rng = np.random.default_rng(seed)
        d, p = cfg.d_model, self._params
        n_tokens = cfg.n_patches + 1
        p["patch_embed.w"] = _uniform(rng, (cfg.patch_len, d), cfg.patch_len)
        p["patch_embed.b"] = _zeros(d)
        p["pos_embed"] = _uniform(rng, (cfg.n_patches, d), d)
        p["global_token"] = _uniform(rng, (1, d), d)
        if cfg.use_exogenous:
            p["exog_embed.w"] = _uniform(rng, (cfg.lookback, d), cfg.lookback)
            p["exog_embed.b"] = _zeros(d)
        for i in range(cfg.n_layers):
            pre = f"layers.{i}."
            for proj in ("q", "k", "v", "o"):
                p[pre + f"self_attn.w{proj}"] = _uniform(rng, (d, d), d)
                p[pre + f"self_attn.b{proj}"] = _zeros(d)
            p[pre + "ln1.gamma"] = _ones(d)
            p[pre + "ln1.beta"] = _zeros(d)
            if cfg.use_exogenous:
                for proj in ("q", "k", "v", "o"):
                    p[pre + f"cross_attn.w{proj}"] = _uniform(rng, (d, d), d)
                    p[pre + f"cross_attn.b{proj}"] = _zeros(d)
                p[pre + "ln_cross.gamma"] = _ones(d)
                p[pre + "ln_cross.beta"] = _zeros(d)
            p[pre + "ffn.w1"] = _uniform(rng, (d, cfg.d_ff), d)
            p[pre + "ffn.b1"] = _zeros(cfg.d_ff)
            p[pre + "ffn.w2"] = _uniform(rng, (cfg.d_ff, d), cfg.d_ff)
            p[pre + "ffn.b2"] = _zeros(d)
            p[pre + "ln2.gamma"] = _ones(d)
            p[pre + "ln2.beta"] = _zeros(d)
        p["head.w"] = _uniform(rng, (n_tokens * d, cfg.horizon), n_tokens * d)
        p["head.b"] = _zeros(cfg.horizon)
        self._attention_capture: Optional[list[np.ndarray]] = None

    # -- token construction -------------------------------------------------

    def _patch_tokens(self, windows: np.ndarray) -> Tensor:
        cfg, p = self.cfg, self._params
        b = windows.shape[0]
        patches = extract_patches(windows, cfg.patch_len, cfg.stride)
        flat = Tensor(patches.reshape(b * cfg.n_patches, cfg.patch_len))
        tokens = ad.reshape(_linear(flat, p["patch_embed.w"], p["patch_embed.b"]),
                            (b, cfg.n_patches, cfg.d_model))
        pos = ad.repeat(ad.reshape(p["pos_embed"], (1, cfg.n_patches, cfg.d_model)), b, 0)
        return ad.add(tokens, pos)

    def _variate_tokens(self, exog: np.ndarray) -> Tensor:
        cfg, p = self.cfg, self._params
        b = exog.shape[0]
        if exog.shape[1] != cfg.lookback or exog.shape[2] != cfg.n_exog:
            raise DimensionError(f"exogenous window shape {exog.shape} != "
                                 f"(B, {cfg.lookback}, {cfg.n_exog})")
        # one token per variate: the variate's whole window through one map
        per_variate = ad.reshape(ad.transpose(Tensor(exog), (0, 2, 1)),
                                 (b * cfg.n_exog, cfg.lookback))
        tokens = _linear(per_variate, p["exog_embed.w"], p["exog_embed.b"])
        return ad.reshape(tokens, (b, cfg.n_exog, cfg.d_model))

    # -- attention ----------------------------------------------------------

    def _multihead(self, q: Tensor, k: Tensor, v: Tensor, dropout: float,
                   training: bool, rng, capture: Optional[list] = None) -> Tensor:
        cfg = self.cfg
        dh = cfg.d_model // cfg.n_heads
        inv_sqrt = 1.0 / math.sqrt(dh)
        heads = []
        for h in range(cfg.n_heads):
            qh = ad.narrow(q, 2, h * dh, dh)
            kh = ad.narrow(k, 2, h * dh, dh)
            vh = ad.narrow(v, 2, h * dh, dh)
            scores = ad.scale(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), inv_sqrt)
            attn = ad.softmax(scores, axis=2)
            if capture is not None:
                capture.append(attn.data.copy())
            attn = _dropout(attn, dropout, training, rng)
            heads.append(ad.matmul(attn, vh))
        return ad.concat(heads, axis=2)

    def _encoder_layer(self, i: int, tokens: Tensor, variates: Optional[Tensor],
                       training: bool, rng) -> Tensor:
        cfg, p = self.cfg, self._params
        pre = f"layers.{i}."
        b, t, d = tokens.shape

        # patch-wise self-attention over [patch tokens || global token]
        q = ad.reshape(_linear(ad.reshape(tokens, (b * t, d)),
                               p[pre + "self_attn.wq"], p[pre + "self_attn.bq"]), (b, t, d))
        k = ad.reshape(_linear(ad.reshape(tokens, (b * t, d)),
                               p[pre + "self_attn.wk"], p[pre + "self_attn.bk"]), (b, t, d))
        v = ad.reshape(_linear(ad.reshape(tokens, (b * t, d)),
                               p[pre + "self_attn.wv"], p[pre + "self_attn.bv"]), (b, t, d))
        attended = self._multihead(q, k, v, cfg.dropout, training, rng)
        out = ad.reshape(_linear(ad.reshape(attended, (b * t, d)),
                                 p[pre + "self_attn.wo"], p[pre + "self_attn.bo"]), (b, t, d))
        out = _dropout(out, cfg.dropout, training, rng)
        tokens = ad.layer_norm(ad.add(tokens, out),
                               p[pre + "ln1.gamma"], p[pre + "ln1.beta"])

        # variate-wise cross-attention: global token is the sole query
        if variates is not None:
            n_patch = t - 1
            patch_part = ad.narrow(tokens, 1, 0, n_patch)
            global_part = ad.narrow(tokens, 1, n_patch, 1)
            e = variates.shape[1]
            qg = ad.reshape(_linear(ad.reshape(global_part, (b, d)),
                                    p[pre + "cross_attn.wq"], p[pre + "cross_attn.bq"]),
                            (b, 1, d))
            kx = ad.reshape(_linear(ad.reshape(variates, (b * e, d)),
                                    p[pre + "cross_attn.wk"], p[pre + "cross_attn.bk"]),
                            (b, e, d))
            vx = ad.reshape(_linear(ad.reshape(variates, (b * e, d)),
                                    p[pre + "cross_attn.wv"], p[pre + "cross_attn.bv"]),
                            (b, e, d))
            capture = [] if self._attention_capture is not None else None
            cross = self._multihead(qg, kx, vx, cfg.dropout, training, rng, capture)
            if capture is not None:
                self._attention_capture.append(np.stack(capture, axis=0))  # (H, B, 1, E)
            cross = ad.reshape(_linear(ad.reshape(cross, (b, d)),
                                       p[pre + "cross_attn.wo"], p[pre + "cross_attn.bo"]),
                               (b, 1, d))
            cross = _dropout(cross, cfg.dropout, training, rng)
            new_global = ad.layer_norm(ad.add(global_part, cross),
                                       p[pre + "ln_cross.gamma"], p[pre + "ln_cross.beta"])
            tokens = ad.concat([patch_part, new_global], axis=1)

        # position-wise feed-forward
        hidden = ad.gelu(_linear(ad.reshape(tokens, (b * t, d)),
                                 p[pre + "ffn.w1"], p[pre + "ffn.b1"]))
        hidden = _dropout(hidden, cfg.dropout, training, rng)
        ff = _linear(hidden, p[pre + "ffn.w2"], p[pre + "ffn.b2"])
        ff = _dropout(ff, cfg.dropout, training, rng)
        return ad.layer_norm(ad.add(tokens, ad.reshape(ff, (b, t, d))),
                             p[pre + "ln2.gamma"], p[pre + "ln2.beta"])

    # -- public surface -----------------------------------------------------

    def forward(self, windows, exog=None, training=False, rng=None,
                capture_attention: bool = False) -> Tensor:
        cfg, p = self.cfg, self._params
        windows = self._check_inputs(windows, exog)
        b = windows.shape[0]
        tokens = self._patch_tokens(windows)
        glob = ad.repeat(ad.reshape(p["global_token"], (1, 1, cfg.d_model)), b, 0)
        tokens = ad.concat([tokens, glob], axis=1)
        variates = None
        if cfg.use_exogenous:
            variates = self._variate_tokens(np.asarray(exog, dtype=np.float64))
        self._attention_capture = [] if capture_attention else None
        for i in range(cfg.n_layers):
            tokens = self._encoder_layer(i, tokens, variates, training, rng)
        flat = ad.reshape(tokens, (b, (cfg.n_patches + 1) * cfg.d_model))
        out = _linear(flat, p["head.w"], p["head.b"])
        self._last_capture = self._attention_capture
        self._attention_capture = None
        return out


def extract_cross_attention(model: TimeXer, window: np.ndarray,
                            exog_window: np.ndarray, layer: int,
                            key_labels: Optional[Sequence[str]] = None) -> AttentionRecord:
    """Capture one layer's cross-attention weights during an eval forward
    pass over a single (already scaled) input window."""
    if not isinstance(model, TimeXer) or not model.uses_exogenous:
        raise ContractError("cross-attention extraction needs an "
                            "exogenous-conditioned model")
    if not 0 <= layer < model.cfg.n_layers:
        raise ContractError(f"layer {layer} outside 0..{model.cfg.n_layers - 1}")
    window = np.asarray(window, dtype=np.float64)
    if window.ndim == 1:
        window = window[None, :]
        exog_window = np.asarray(exog_window)[None, ...]
    if window.shape[0] != 1:
        raise ContractError("attention extraction expects a single window")
    model.forward(window, exog_window, training=False, capture_attention=True)
    per_layer = model._last_capture[layer]  # (H, 1, 1, E)
    weights = per_layer[:, 0, :, :]  # (H, 1, E)
    if key_labels is None:
        key_labels = [f"exog_{j}" for j in range(weights.shape[-1])]
    return AttentionRecord(layer=layer, weights=weights, key_labels=list(key_labels))


# ---------------------------------------------------------------------------
# N-BEATS-style stacked MLP
# ---------------------------------------------------------------------------

@dataclass
class NBeatsConfig:
    horizon: int
    lookback: int = 256
    n_blocks: int = 3
    hidden: int = 512
    block_layers: int = 4
    dropout: float = 0.0

    def __post_init__(self):
        if self.n_blocks < 1 or self.block_layers < 1:
            raise ContractError("n_blocks and block_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError(f"dropout must be in [0, 1), got {self.dropout}")


class NBeatsLite(Forecaster):
    """Generic residual blocks: each block backcasts and forecasts, the
    residual chains to the next block, forecasts are summed."""

    model_type = "nbeats"

    def __init__(self, cfg: NBeatsConfig, name: str = "nbeats", seed: int = 0):
        super().__init__(name, cfg.lookback, cfg.horizon)
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        p = self._params
        for blk in range(cfg.n_blocks):
            pre = f"blocks.{blk}."
            fan = cfg.lookback
            for j in range(cfg.block_layers):
                p[pre + f"fc{j}.w"] = _uniform(rng, (fan, cfg.hidden), fan)
                p[pre + f"fc{j}.b"] = _zeros(cfg.hidden)
                fan = cfg.hidden
            p[pre + "backcast.w"] = _uniform(rng, (cfg.hidden, cfg.lookback), cfg.hidden)
            p[pre + "backcast.b"] = _zeros(cfg.lookback)
            p[pre + "forecast.w"] = _uniform(rng, (cfg.hidden, cfg.horizon), cfg.hidden)
            p[pre + "forecast.b"] = _zeros(cfg.horizon)

    def forward(self, windows, exog=None, training=False, rng=None) -> Tensor:
        cfg, p = self.cfg, self._params
        windows = self._check_inputs(windows, exog)
        residual = Tensor(windows)
        total: Optional[Tensor] = None
        for blk in range(cfg.n_blocks):
            pre = f"blocks.{blk}."
            hidden = residual
            for j in range(cfg.block_layers):
                hidden = ad.relu(_linear(hidden, p[pre + f"fc{j}.w"], p[pre + f"fc{j}.b"]))
                hidden = _dropout(hidden, cfg.dropout, training, rng)
            backcast = _linear(hidden, p[pre + "backcast.w"], p[pre + "backcast.b"])
            forecast = _linear(hidden, p[pre + "forecast.w"], p[pre + "forecast.b"])
            residual = ad.sub(residual, backcast)
            total = forecast if total is None else ad.add(total, forecast)
        return total


# ---------------------------------------------------------------------------
# sanity-floor baselines
# ---------------------------------------------------------------------------

@dataclass
class LinearConfig:
    horizon: int
    lookback: int = 256


class LinearForecaster(Forecaster):
    """Single affine map from the lookback window to all H steps."""

    model_type = "linear"

    def __init__(self, cfg: LinearConfig, name: str = "linear", seed: int = 0):
        super().__init__(name, cfg.lookback, cfg.horizon)
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self._params["w"] = _uniform(rng, (cfg.lookback, cfg.horizon), cfg.lookback)
        self._params["b"] = _zeros(cfg.horizon)

    def forward(self, windows, exog=None, training=False, rng=None) -> Tensor:
        windows = self._check_inputs(windows, exog)
        return _linear(Tensor(windows), self._params["w"], self._params["b"])


@dataclass
class NaiveConfig:
    horizon: int
    lookback: int = 256


class NaivePersistence(Forecaster):
    """Last observed value repeated H times; no trainable parameters."""

    model_type = "naive"

    def __init__(self, cfg: NaiveConfig, name: str = "naive", seed: int = 0):
        super().__init__(name, cfg.lookback, cfg.horizon)
        self.cfg = cfg

    def forward(self, windows, exog=None, training=False, rng=None) -> Tensor:
        windows = self._check_inputs(windows, exog)
        return Tensor(np.repeat(windows[:, -1:], self.horizon, axis=1))


def naive_forecast(window: np.ndarray, horizon: int) -> np.ndarray:
    """Standalone persistence forecast for a single window."""
    window = np.asarray(window, dtype=np.float64)
    return np.full(horizon, window[-1])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1

_MODEL_CLASSES = {
    "timexer": (TimeXer, TimeXerConfig),
    "nbeats": (NBeatsLite, NBeatsConfig),
    "linear": (LinearForecaster, LinearConfig),
    "naive": (NaivePersistence, NaiveConfig),
}


def config_hash(model_type: str, cfg_dict: dict) -> str:
    blob = json.dumps({"type": model_type, "config": cfg_dict}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def save_checkpoint(model: Forecaster, path) -> None:
    """Write a JSON checkpoint atomically (temp file + rename)."""
    cfg_dict = asdict(model.cfg)
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "model_type": model.model_type,
        "name": model.name,
        "config": cfg_dict,
        "config_hash": config_hash(model.model_type, cfg_dict),
        "params": {k: {"shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
                   for k, p in model.parameters().items()},
        "exog_scaler": model.exog_scaler.to_dict() if model.exog_scaler else None,
    }
    path = str(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Forecaster:
    """Rebuild a model from a checkpoint, rejecting tampered configs."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version "
                              f"{payload.get('format_version')}")
    mtype = payload.get("model_type")
    if mtype not in _MODEL_CLASSES:
        raise CheckpointError(f"{path}: unknown model type {mtype!r}")
    if config_hash(mtype, payload["config"]) != payload.get("config_hash"):
        raise CheckpointError(f"{path}: config hash mismatch (checkpoint config "
                              f"was modified after saving)")
    cls, cfg_cls = _MODEL_CLASSES[mtype]
    model = cls(cfg_cls(**payload["config"]), name=payload["name"])
    params = model.parameters()
    if set(params) != set(payload["params"]):
        raise CheckpointError(f"{path}: parameter set does not match the config")
    for k, entry in payload["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != params[k].shape:
            raise CheckpointError(f"{path}: parameter {k} has shape {arr.shape}, "
                                  f"expected {params[k].shape}")
        params[k].data[...] = arr
    if payload.get("exog_scaler"):
        model.exog_scaler = ExogScaler.from_dict(payload["exog_scaler"])
    return model
