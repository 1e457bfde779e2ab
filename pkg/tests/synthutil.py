"""Synthetic lead-lag data generators shared by integration/acceptance tests.

The generative law mirrors the liquidity story at desk scale: a smooth
random-walk driver g leads the target by ``lead`` days,

    y_t = g(t - lead) + AR(1) noise,

so lag features taken on g with offsets shorter than ``lead`` expose the
target's future signal inside the observable window, while a univariate
model must extrapolate the driver's drift.
"""

from datetime import date, timedelta

import numpy as np

from liqcast.data import (SPLIT_TEST, SPLIT_TRAIN, SPLIT_VALIDATION,
                          AlignedDataset, GlobalLiquiditySeries, RawSeries,
                          apply_lead_shift, build_lag_features, daily_range)

LEAD = 84


def smooth_random_walk(rng, n, step_sigma=0.2, smooth=10):
    walk = np.cumsum(rng.normal(0.0, step_sigma, size=n))
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        walk = np.convolve(np.concatenate([np.full(smooth - 1, walk[0]), walk]),
                           kernel, mode="valid")
    return walk


def ar1_noise(rng, n, phi=0.8, sigma=0.5):
    noise = np.empty(n)
    noise[0] = rng.normal(0.0, sigma / np.sqrt(1 - phi**2))
    shocks = rng.normal(0.0, sigma, size=n)
    for t in range(1, n):
        noise[t] = phi * noise[t - 1] + shocks[t]
    return noise


def _label_tail(n_rows, n_val, n_test):
    labels = np.full(n_rows, SPLIT_TRAIN, dtype="<U10")
    labels[n_rows - n_val - n_test:n_rows - n_test] = SPLIT_VALIDATION
    labels[n_rows - n_test:] = SPLIT_TEST
    return labels


def lead_lag_dataset(seed, n_days=740, lead=LEAD, offsets=(1, 7, 28, 84, 91, 98),
                     n_val=60, n_test=120, step_sigma=0.2, phi=0.8,
                     noise_sigma=0.5):
    """Pipeline-built dataset where every lag column is a true lag of the
    driver (offsets below ``lead`` expose the target's future signal)."""
    rng = np.random.default_rng(seed)
    g = smooth_random_walk(rng, n_days, step_sigma)
    noise = ar1_noise(rng, n_days, phi, noise_sigma)
    start = date(2020, 1, 1)
    cal = daily_range(start, start + timedelta(days=n_days - 1))
    y = np.full(n_days, np.nan)
    y[lead:] = g[:-lead] + noise[lead:]
    target = RawSeries("target", cal[lead:], y[lead:])
    raw = GlobalLiquiditySeries(cal, g, np.array([d.toordinal() for d in cal]))
    ds = build_lag_features(apply_lead_shift(raw, 0), target, list(offsets))
    ds.split_labels[:] = _label_tail(len(ds), n_val, n_test)
    return ds


def decoy_dataset(seed, n_days=740, lead=LEAD, n_val=60, n_test=120,
                  step_sigma=0.2, phi=0.8, noise_sigma=0.5):
    """Directly-constructed dataset where only the global_lag_84 column is a
    true lag of the driver; the other five columns are independent walks."""
    rng = np.random.default_rng(seed)
    g = smooth_random_walk(rng, n_days, step_sigma)
    noise = ar1_noise(rng, n_days, phi, noise_sigma)
    offsets = [7, 28, 84, 91, 98]  # columns: global + these
    start = date(2020, 1, 1)
    cal = daily_range(start, start + timedelta(days=n_days - 1))
    n_rows = n_days - lead
    dates = cal[lead:]
    prices = g[:-lead] + noise[lead:]
    exog = np.empty((n_rows, 1 + len(offsets)))
    informative_col = 1 + offsets.index(84)
    for c in range(exog.shape[1]):
        if c == informative_col:
            exog[:, c] = g[:-lead]  # value at row t is g(t - 84)
        else:
            exog[:, c] = smooth_random_walk(rng, n_rows, step_sigma)
    ds = AlignedDataset(dates, prices, exog, offsets, _label_tail(n_rows, n_val, n_test))
    return ds, "global_lag_84"
