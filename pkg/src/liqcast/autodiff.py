"""Dense-tensor numeric core with reverse-mode automatic differentiation.

All values are 64-bit floats with 1-3 axes. Gradients are computed on a
dynamic tape that is rebuilt for every forward pass: operations executed
while a ``Tape`` is active record a node with the ids of their inputs and a
backward rule, and ``Tape.backward`` replays the nodes in reverse. There is
no broadcasting beyond scalars; shapes are made explicit with ``reshape`` /
``repeat`` so every backward rule stays a direct transcription of the chain
rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "Tensor",
    "Tape",
    "apply_op",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "relu",
    "gelu",
    "softmax",
    "layer_norm",
    "reshape",
    "transpose",
    "concat",
    "narrow",
    "repeat",
    "sum_all",
    "mean_all",
    "finite_difference_check",
    "FiniteDifferenceReport",
]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Tensor:
    """Dense float64 array that can participate in gradient recording.

    ``node_id`` is the handle of this tensor on the tape it was produced on
    (or registered with, for leaves); it is only meaningful together with
    the owning tape.
    """

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim > 3:
            raise DimensionError(f"tensors are limited to 3 axes, got shape {arr.shape}")
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{req})"

    # light operator sugar; scalars allowed on the right
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


@dataclass
class _Node:
    inputs: tuple[int, ...]
    shape: tuple[int, ...]
    # maps upstream gradient -> one gradient per input (None for unused slots);
    # None for leaf nodes
    backward: Optional[Callable[[np.ndarray], tuple]]


class Tape:
    """Ordered record of operations for one forward pass.

    Nodes are appended in execution order, which is by construction a
    topological order (an op runs only after its inputs exist). The tape is
    used as a context manager::

        with Tape() as tape:
            loss = model_loss(...)
        tape.backward(loss)

    Gradients accumulate additively into ``requires_grad`` leaves; call
    ``zero_grad`` on the leaves (or build a fresh tape) to reset.
    """

    _active: Optional["Tape"] = None  # single-threaded per the concurrency model

    def __init__(self):
        self._nodes: list[_Node] = []
        self._leaves: dict[int, Tensor] = {}
        self._grads: list[Optional[np.ndarray]] = []

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise ContractError("nested tapes are not supported")
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        Tape._active = None

    def __len__(self) -> int:
        return len(self._nodes)

    def _register_leaf(self, t: Tensor) -> int:
        if t._tape is self and t.node_id is not None:
            return t.node_id
        node_id = len(self._nodes)
        self._nodes.append(_Node(inputs=(), shape=t.shape, backward=None))
        self._leaves[node_id] = t
        t.node_id = node_id
        t._tape = self
        return node_id

    def _record(self, out: Tensor, inputs: tuple[int, ...],
                backward: Callable[[np.ndarray], tuple]) -> None:
        node_id = len(self._nodes)
        self._nodes.append(_Node(inputs=inputs, shape=out.shape, backward=backward))
        out.node_id = node_id
        out._tape = self
        out.requires_grad = True

    def backward(self, root: Tensor, seed: Optional[np.ndarray] = None) -> None:
        """Accumulate d(root)/d(leaf) into every requires_grad leaf.

        ``root`` must be scalar-shaped unless an explicit ``seed`` gradient
        (matching root's shape) is supplied. Repeated calls accumulate.
        """
        if root._tape is not self or root.node_id is None:
            raise ContractError("backward root was not produced on this tape")
        if seed is None:
            if root.size != 1:
                raise ContractError(
                    f"backward root must be scalar-shaped, got shape {root.shape}")
            seed_arr = np.ones_like(root.data)
        else:
            seed_arr = np.asarray(seed, dtype=np.float64)
            if seed_arr.shape != root.shape:
                raise DimensionError(
                    f"seed shape {seed_arr.shape} != root shape {root.shape}")
        grads: list[Optional[np.ndarray]] = [None] * len(self._nodes)
        grads[root.node_id] = seed_arr.copy()
        for nid in range(root.node_id, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = self._nodes[nid]
            if node.backward is None:
                continue
            for iid, gi in zip(node.inputs, node.backward(g)):
                if iid < 0 or gi is None:
                    continue
                if grads[iid] is None:
                    grads[iid] = np.array(gi, dtype=np.float64)  # defensive copy: rules may return views
                else:
                    grads[iid] += gi
        self._grads = grads
        for nid, leaf in self._leaves.items():
            g = grads[nid]
            if g is None:
                continue
            if leaf.grad is None:
                leaf.grad = g.copy()
            else:
                leaf.grad = leaf.grad + g

    def grad_of(self, t: Tensor) -> Optional[np.ndarray]:
        """Gradient buffer of any tape node after the last backward call."""
        if t._tape is not self or t.node_id is None:
            return None
        return self._grads[t.node_id] if t.node_id < len(self._grads) else None


def _prepare(inputs: Sequence[Tensor]):
    """Return (tape, input_ids) when recording is needed, else None."""
    tape = Tape._active
    if tape is None:
        return None
    if not any(t.requires_grad for t in inputs):
        return None
    ids = tuple(tape._register_leaf(t) if t.requires_grad else -1 for t in inputs)
    return tape, ids


def apply_op(out_data: np.ndarray, inputs: Sequence[Tensor],
             backward: Callable[[np.ndarray], tuple]) -> Tensor:
    """Extension hook: wrap a precomputed result as a recorded op.

    ``backward`` maps the upstream gradient to one gradient per input
    (``None`` to skip an input).
    """
    out = Tensor(out_data)
    rec = _prepare(inputs)
    if rec is not None:
        tape, ids = rec
        tape._record(out, ids, backward)
    return out


# ---------------------------------------------------------------------------
# core ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: 2-D x 2-D, or 3-D x 3-D with an equal leading axis."""
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim or ad.ndim not in (2, 3):
        raise DimensionError(f"matmul needs two 2-D or two 3-D tensors, got {ad.shape} x {bd.shape}")
    if ad.shape[-1] != bd.shape[-2] or (ad.ndim == 3 and ad.shape[0] != bd.shape[0]):
        raise DimensionError(f"matmul shapes do not agree: {ad.shape} x {bd.shape}")
    out = ad @ bd

    def bw(g: np.ndarray):
        ga = g @ bd.swapaxes(-1, -2)
        gb = ad.swapaxes(-1, -2) @ g
        return ga, gb

    return apply_op(out, (a, b), bw)


def _as_scalar(b) -> Optional[float]:
    if isinstance(b, (int, float, np.floating, np.integer)):
        return float(b)
    return None


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b) -> Tensor:
    s = _as_scalar(b)
    if s is not None:
        return apply_op(a.data + s, (a,), lambda g: (g,))
    _check_same_shape("add", a, b)
    return apply_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    s = _as_scalar(b)
    if s is not None:
        return apply_op(a.data - s, (a,), lambda g: (g,))
    _check_same_shape("sub", a, b)
    return apply_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    s = _as_scalar(b)
    if s is not None:
        return scale(a, s)
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return apply_op(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return apply_op(a.data * s, (a,), lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return apply_op(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def gelu(a: Tensor) -> Tensor:
    """GELU with the tanh approximation; the backward rule differentiates
    the same approximation so gradient checks close exactly."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def bw(g: np.ndarray):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
        dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * dinner
        return (g * dx,)

    return apply_op(out, (a,), bw)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with the max-subtraction overflow guard."""
    xd = x.data
    if not -xd.ndim <= axis < xd.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {xd.shape}")
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g: np.ndarray):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return apply_op(y, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then apply the affine
    map ``gamma * xhat + beta`` (gamma/beta are 1-D over the last axis)."""
    xd = x.data
    n = xd.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise DimensionError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match last axis {n}")
    mean = xd.mean(axis=-1, keepdims=True)
    centered = xd - mean
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = gamma.data * xhat + beta.data

    def bw(g: np.ndarray):
        reduce_axes = tuple(range(xd.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes)
        dbeta = g.sum(axis=reduce_axes)
        dxhat = g * gamma.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta

    return apply_op(out, (x, gamma, beta), bw)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = x.shape
    return apply_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise DimensionError(f"transpose axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return apply_op(np.transpose(x.data, axes), (x,),
                    lambda g: (np.transpose(g, inverse),))


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ContractError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def bw(g: np.ndarray):
        return tuple(np.split(g, offsets, axis=axis))

    return apply_op(out, tuple(parts), bw)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries along ``axis``."""
    if not (0 <= start and start + length <= x.shape[axis]):
        raise DimensionError(
            f"narrow [{start}:{start + length}] out of range for axis {axis} of {x.shape}")
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    xshape = x.shape

    def bw(g: np.ndarray):
        full = np.zeros(xshape, dtype=np.float64)
        full[sl] = g
        return (full,)

    return apply_op(x.data[sl], (x,), bw)


def repeat(x: Tensor, n: int, axis: int) -> Tensor:
    """Tile a size-1 axis ``n`` times (the explicit stand-in for broadcasting)."""
    if x.shape[axis] != 1:
        raise DimensionError(f"repeat requires size-1 axis, got shape {x.shape} axis {axis}")
    return apply_op(np.repeat(x.data, n, axis=axis), (x,),
                    lambda g: (g.sum(axis=axis, keepdims=True),))


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape
    return apply_op(np.array([x.data.sum()]), (x,),
                    lambda g: (np.full(shape, g[0]),))


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.size)


# ---------------------------------------------------------------------------
# gradient verification harness
# ---------------------------------------------------------------------------

@dataclass
class FiniteDifferenceReport:
    """Central-difference vs. tape gradient comparison per parameter."""

    step: float
    tol: float
    max_rel_error_per_param: dict[str, float] = field(default_factory=dict)
    entries_checked: int = 0

    @property
    def max_rel_error(self) -> float:
        return max(self.max_rel_error_per_param.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def __str__(self) -> str:
        lines = [f"finite-difference check (step={self.step:g}, tol={self.tol:g}):"]
        for name, err in sorted(self.max_rel_error_per_param.items()):
            lines.append(f"  {name}: max rel err {err:.3e}")
        lines.append(f"  => {'PASS' if self.passed else 'FAIL'} "
                     f"(max {self.max_rel_error:.3e} over {self.entries_checked} entries)")
        return "\n".join(lines)


def _rel_err(a: float, b: float) -> float:
    denom = max(abs(a), abs(b), 1e-8)
    return abs(a - b) / denom


def finite_difference_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    step: float = 1e-5,
    tol: float = 1e-3,
    entries_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> FiniteDifferenceReport:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``f`` must be a deterministic function of ``params`` (it is re-evaluated
    with perturbed entries). When ``entries_per_param`` is set, that many
    entries of each parameter are sampled with ``rng`` instead of sweeping
    every entry.
    """
    if isinstance(params, Mapping):
        named = list(params.items())
    else:
        named = [(f"p{i}", p) for i, p in enumerate(params)]
    if entries_per_param is not None and rng is None:
        rng = np.random.default_rng(0)

    with Tape() as tape:
        loss = f()
    if loss.size != 1:
        raise ContractError("finite_difference_check needs a scalar-valued f")
    if not np.isfinite(loss.data).all():
        raise ContractError("finite_difference_check: f() produced a non-finite loss")
    saved = {name: (p.grad.copy() if p.grad is not None else None) for name, p in named}
    for _, p in named:
        p.grad = None
    tape.backward(loss)
    tape_grads = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                  for name, p in named}
    for name, p in named:
        p.grad = saved[name]

    report = FiniteDifferenceReport(step=step, tol=tol)
    for name, p in named:
        flat = p.data.reshape(-1)
        n = flat.size
        if entries_per_param is None or entries_per_param >= n:
            idxs = range(n)
        else:
            idxs = rng.choice(n, size=entries_per_param, replace=False)
        worst = 0.0
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            up = f().item()
            flat[i] = orig - step
            down = f().item()
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(down)):
                raise ContractError(
                    f"finite_difference_check: non-finite loss while perturbing {name}[{i}]")
            fd = (up - down) / (2.0 * step)
            worst = max(worst, _rel_err(fd, tape_grads[name].reshape(-1)[i]))
            report.entries_checked += 1
        report.max_rel_error_per_param[name] = worst
    return report
