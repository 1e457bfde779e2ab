import sys, time
sys.path.insert(0, "tests")
import numpy as np
from synthutil import lead_lag_dataset
from liqcast.models import TimeXer, TimeXerConfig
from liqcast.training import TrainConfig, train
from liqcast.evaluation import rolling_origin

def desk_cfg(h, n_exog, use_exog, dropout):
    return TimeXerConfig(horizon=h, lookback=64, patch_len=16, stride=16,
                         d_model=32, n_layers=2, n_heads=2, d_ff=64, dropout=dropout,
                         use_exogenous=use_exog, n_exog=n_exog if use_exog else 0)

def run(seed, h, gen, tr, dropout):
    ds = lead_lag_dataset(seed, **gen)
    tcfg = TrainConfig(**tr, seed=seed)
    out = {}
    for tag, ue in (("exog", True), ("endog", False)):
        m = TimeXer(desk_cfg(h, ds.exog.shape[1], ue, dropout), name=tag, seed=seed*7+(1 if ue else 2))
        train(m, ds, h, tcfg)
        out[tag] = rolling_origin(m, ds, h).mse_raw
    return out

gen = dict(step_sigma=0.3, phi=0.7, noise_sigma=0.25)
tr = dict(batch_size=64, learning_rate=2e-3, max_epochs=120, patience=12)
t0=time.perf_counter()
for h in (48, 8):
    wins=0; ratios=[]
    for seed in range(4):
        r = run(seed, h, gen, tr, 0.05)
        win = r["exog"] < r["endog"]; wins += win; ratios.append(r["endog"]/r["exog"])
        print(f"h={h} seed={seed}: exog={r['exog']:.3f} endog={r['endog']:.3f} ratio={ratios[-1]:.2f} win={win}", flush=True)
    print(f"h={h}: wins {wins}/4, elapsed {time.perf_counter()-t0:.0f}s", flush=True)
