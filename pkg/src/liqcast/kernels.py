"""Hot resampling kernels, JIT-compiled with numba when available.

The bootstrap inner loop (per-replicate column means under an index
resampling) dominates the cost of the model-confidence-set procedure, so it
ships in two implementations:

* ``resampled_means_numba`` - nopython JIT loop, the default;
* ``resampled_means_numpy`` - vectorized chunked-gather fallback.

Set ``LIQCAST_NO_NUMBA=1`` to force the numpy path (also used automatically
when numba is not importable). ``benchmarks/bench_bootstrap.py`` compares
the two. The paths agree to floating round-off, not bit-exactly, because
their summation orders differ.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "resampled_means",
    "resampled_means_numpy",
    "resampled_means_numba",
]

_DISABLED = os.environ.get("LIQCAST_NO_NUMBA", "") not in ("", "0")

try:
    if _DISABLED:
        raise ImportError("numba disabled via LIQCAST_NO_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised via env flag in tests
    njit = None
    NUMBA_ENABLED = False


def resampled_means_numpy(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Column means of values[idx[r]] for every replicate r.

    values: (n, m) float64; idx: (R, n) integer rows into values.
    Returns (R, m). Gathers in chunks to bound peak memory.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    n, m = values.shape
    r_total = idx.shape[0]
    out = np.empty((r_total, m), dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, n * m))
    for start in range(0, r_total, chunk):
        stop = min(start + chunk, r_total)
        out[start:stop] = values[idx[start:stop]].mean(axis=1)
    return out


if NUMBA_ENABLED:

    @njit(cache=True)
    def _resampled_means_jit(values, idx):  # pragma: no cover - compiled
        r_total, n = idx.shape
        m = values.shape[1]
        out = np.zeros((r_total, m), dtype=np.float64)
        for r in range(r_total):
            for t in range(n):
                row = idx[r, t]
                for j in range(m):
                    out[r, j] += values[row, j]
        return out / n

    def resampled_means_numba(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """JIT loop version of :func:`resampled_means_numpy`."""
        return _resampled_means_jit(np.ascontiguousarray(values, dtype=np.float64),
                                    np.ascontiguousarray(idx, dtype=np.int64))

    resampled_means = resampled_means_numba
else:
    resampled_means_numba = None
    resampled_means = resampled_means_numpy
