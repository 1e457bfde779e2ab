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

# noise-free extraction ceiling: y_t = g(t-84) exactly
h = 48
ds = lead_lag_dataset(0, step_sigma=0.25, phi=0.5, noise_sigma=1e-9,
                      n_days=900, n_val=120, offsets=(1, 7, 28))
var_test = np.var(ds.prices[np.flatnonzero(ds.split_labels == "test")])
print(f"test variance: {var_test:.3f}")
for tag, ue in (("exog", True), ("endog", False)):
    t0 = time.perf_counter()
    m = TimeXer(desk_cfg(h, ds.exog.shape[1], ue), name=tag, seed=1 if ue else 2)
    res = train(m, ds, h, TrainConfig(batch_size=64, learning_rate=1e-3,
                                      max_epochs=400, patience=40, seed=0))
    rep = rolling_origin(m, ds, h)
    print(f"{tag}: test={rep.mse_raw:.4f} val={res.best_val_mse:.4f} "
          f"best_ep={res.best_epoch} ({time.perf_counter()-t0:.0f}s)", flush=True)
