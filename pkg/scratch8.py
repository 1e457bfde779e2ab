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

gen = dict(step_sigma=0.25, phi=0.5, noise_sigma=0.45, n_days=900, n_val=120)
h = 48
for lr, epochs, pat, bs in ((3e-3, 300, 30, 64), (5e-3, 300, 30, 64)):
    t0 = time.perf_counter(); wins = 0; ratios = []
    for seed in range(5):
        ds = lead_lag_dataset(seed, **gen)
        r = {}
        for tag, ue in (("exog", True), ("endog", False)):
            m = TimeXer(desk_cfg(h, ds.exog.shape[1], ue), name=tag, seed=seed*7+(1 if ue else 2))
            train(m, ds, h, TrainConfig(batch_size=bs, learning_rate=lr,
                                        max_epochs=epochs, patience=pat, seed=seed))
            r[tag] = rolling_origin(m, ds, h).mse_raw
        wins += r["exog"] < r["endog"]; ratios.append(r["endog"]/r["exog"])
    print(f"lr={lr} ep={epochs}: wins {wins}/5 ratios={[f'{x:.2f}' for x in ratios]} "
          f"({time.perf_counter()-t0:.0f}s)", flush=True)
