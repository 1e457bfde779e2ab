import sys, time
sys.path.insert(0, "tests")
import numpy as np
from synthutil import lead_lag_dataset
from liqcast.models import TimeXer, TimeXerConfig
from liqcast.training import TrainConfig, train
from liqcast.evaluation import rolling_origin

def desk_cfg(h, n_exog, use_exog):
    return TimeXerConfig(horizon=h, lookback=64, patch_len=16, stride=16,
                         d_model=32, n_layers=2, n_heads=2, d_ff=64, dropout=0.0,
                         use_exogenous=use_exog, n_exog=n_exog if use_exog else 0)

import synthutil
gen = dict(step_sigma=0.25, phi=0.5, noise_sigma=0.45, n_days=1100, n_val=120)
trc = dict(batch_size=64, learning_rate=1e-3, max_epochs=150, patience=15)
t0 = time.perf_counter()
for h in (48, 8):
    wins = 0; ratios = []
    for seed in range(5):
        rng_kw = dict(gen)
        ds = lead_lag_dataset(seed, **rng_kw)
        r = {}
        for tag, ue in (("exog", True), ("endog", False)):
            m = TimeXer(desk_cfg(h, ds.exog.shape[1], ue), name=tag, seed=seed*7+(1 if ue else 2))
            train(m, ds, h, TrainConfig(**trc, seed=seed))
            r[tag] = rolling_origin(m, ds, h).mse_raw
        win = r["exog"] < r["endog"]; wins += win; ratios.append(r["endog"]/r["exog"])
        print(f"h={h} seed={seed}: exog={r['exog']:.4f} endog={r['endog']:.4f} "
              f"ratio={ratios[-1]:.2f} win={win}", flush=True)
    print(f"h={h}: wins {wins}/5 elapsed={time.perf_counter()-t0:.0f}s", flush=True)
