import sys
sys.path.insert(0, "tests")
import numpy as np
from synthutil import lead_lag_dataset
from liqcast.training import instance_normalize, normalize_targets, ExogScaler
from liqcast.data import SPLIT_TRAIN, SPLIT_TEST

# linear-probe ceiling: predict normalized target step j from
# (a) normalized endog window only, (b) endog + z-scored exog windows
for seed in (0, 1, 2):
    ds = lead_lag_dataset(seed, step_sigma=0.3, phi=0.7, noise_sigma=0.25, n_days=1100)
    L, h = 64, 48
    tr = np.flatnonzero(ds.split_labels == SPLIT_TRAIN)
    te = np.flatnonzero(ds.split_labels == SPLIT_TEST)
    scaler = ExogScaler.fit(ds.exog[tr])
    def build(origins):
        w_idx = origins[:, None] - L + 1 + np.arange(L)
        t_idx = origins[:, None] + 1 + np.arange(h)
        wins, st = instance_normalize(ds.prices[w_idx])
        tgt = normalize_targets(ds.prices[t_idx], st)
        ex = scaler.transform(ds.exog[w_idx]).reshape(len(origins), -1)
        return wins, ex, tgt, st
    tr_or = np.arange(tr[0]+L-1, tr[-1]-h+1)
    te_or = np.arange(te[0]-1, te[-1]-h+1)
    Xw, Xe, Y, _ = build(tr_or)
    Vw, Ve, Yv, stv = build(te_or)
    for tag, X, V in (("endog", Xw, Vw), ("exog", np.hstack([Xw, Xe]), np.hstack([Vw, Ve]))):
        lam = 1e-3
        A = np.hstack([X, np.ones((len(X), 1))])
        W = np.linalg.solve(A.T @ A + lam*np.eye(A.shape[1]), A.T @ Y)
        P = np.hstack([V, np.ones((len(V), 1))]) @ W
        mse_norm = float(np.mean((P - Yv)**2))
        raw = P * stv.std + stv.mean
        rawt = Yv * stv.std + stv.mean
        print(f"seed={seed} {tag:6s}: test norm-mse={mse_norm:.4f} raw-mse={float(np.mean((raw-rawt)**2)):.4f}")
