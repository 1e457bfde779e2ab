"""Scratch: tune the planted lead-lag experiment before freezing acceptance."""
import sys
import time

sys.path.insert(0, "tests")
import numpy as np

from synthutil import lead_lag_dataset, decoy_dataset
from liqcast.models import TimeXer, TimeXerConfig, extract_cross_attention
from liqcast.training import TrainConfig, train, instance_normalize
from liqcast.evaluation import rolling_origin
from liqcast.data import SPLIT_TEST


def desk_cfg(horizon, n_exog, use_exog):
    return TimeXerConfig(horizon=horizon, lookback=64, patch_len=16, stride=16,
                         d_model=32, n_layers=2, n_heads=2, d_ff=64, dropout=0.1,
                         use_exogenous=use_exog, n_exog=n_exog if use_exog else 0)


def run_pair(seed, horizon):
    ds = lead_lag_dataset(seed)
    tcfg = TrainConfig(batch_size=64, learning_rate=1e-3, max_epochs=40,
                       patience=5, seed=seed)
    out = {}
    for tag, use_exog in (("exog", True), ("endog", False)):
        model = TimeXer(desk_cfg(horizon, ds.exog.shape[1], use_exog),
                        name=tag, seed=seed * 7 + (1 if use_exog else 2))
        t0 = time.perf_counter()
        train(model, ds, horizon, tcfg)
        rep = rolling_origin(model, ds, horizon)
        out[tag] = (rep.mse_raw, time.perf_counter() - t0)
    return out


def attention_run(seed, horizon=8):
    ds, label = decoy_dataset(seed)
    tcfg = TrainConfig(batch_size=64, learning_rate=1e-3, max_epochs=40,
                       patience=5, seed=seed)
    model = TimeXer(desk_cfg(horizon, ds.exog.shape[1], True), name="exog",
                    seed=seed * 11 + 3)
    train(model, ds, horizon, tcfg)
    test_rows = np.flatnonzero(ds.split_labels == SPLIT_TEST)
    weights = np.zeros(ds.exog.shape[1])
    count = 0
    for o in range(int(test_rows[0]) - 1, int(test_rows[-1]) - horizon + 1, 5):
        w = ds.prices[o - 63:o + 1]
        e = model.exog_scaler.transform(ds.exog[o - 63:o + 1])
        nw, _ = instance_normalize(w[None, :])
        rec = extract_cross_attention(model, nw[0], e, 0, key_labels=ds.exog_names)
        weights += rec.head_averaged()
        count += 1
    weights /= count
    arg = ds.exog_names[int(np.argmax(weights))]
    return arg == label, arg, weights.round(3)


if __name__ == "__main__":
    mode = sys.argv[1] if len(sys.argv) > 1 else "mse"
    seeds = range(int(sys.argv[2]) if len(sys.argv) > 2 else 5)
    if mode == "mse":
        for h in (48, 8):
            wins = 0
            for seed in seeds:
                r = run_pair(seed, h)
                win = r["exog"][0] < r["endog"][0]
                wins += win
                print(f"h={h} seed={seed}: exog={r['exog'][0]:.3f} ({r['exog'][1]:.1f}s) "
                      f"endog={r['endog'][0]:.3f} ({r['endog'][1]:.1f}s) win={win} "
                      f"ratio={r['endog'][0]/r['exog'][0]:.2f}")
            print(f"h={h}: exog wins {wins}/{len(list(seeds))}")
    else:
        hits = 0
        for seed in seeds:
            t0 = time.perf_counter()
            ok, arg, w = attention_run(seed)
            hits += ok
            print(f"seed={seed}: argmax={arg} ok={ok} ({time.perf_counter()-t0:.1f}s) {w}")
        print(f"attention hits: {hits}/{len(list(seeds))}")
