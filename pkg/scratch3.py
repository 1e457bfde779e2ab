import sys, time
sys.path.insert(0, "tests")
import numpy as np
from synthutil import lead_lag_dataset
from liqcast.models import TimeXer, TimeXerConfig
from liqcast.training import TrainConfig, train
from liqcast.evaluation import rolling_origin

def desk_cfg(h, n_exog, use_exog, dropout=0.0):
    return TimeXerConfig(horizon=h, lookback=64, patch_len=16, stride=16,
                         d_model=32, n_layers=2, n_heads=2, d_ff=64, dropout=dropout,
                         use_exogenous=use_exog, n_exog=n_exog if use_exog else 0)

h = 48
gen = dict(step_sigma=0.3, phi=0.7, noise_sigma=0.25, n_days=1100)
for seed in (0, 1):
    ds = lead_lag_dataset(seed, **gen)
    for tag, ue, epochs, lr in (("exog", True, 400, 3e-3), ("endog", False, 400, 3e-3)):
        t0=time.perf_counter()
        m = TimeXer(desk_cfg(h, ds.exog.shape[1], ue), name=tag, seed=seed*7+(1 if ue else 2))
        res = train(m, ds, h, TrainConfig(batch_size=64, learning_rate=lr,
                                          max_epochs=epochs, patience=40, seed=seed))
        rep = rolling_origin(m, ds, h)
        print(f"seed={seed} {tag}: test={rep.mse_raw:.3f} val={res.best_val_mse:.3f} "
              f"train={res.log[res.best_epoch-1]['train_mse']:.3f} "
              f"stopped={res.stopped_epoch} best={res.best_epoch} ({time.perf_counter()-t0:.0f}s)", flush=True)
