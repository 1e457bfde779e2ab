import sys
sys.path.insert(0, "tests")
import numpy as np
from synthutil import lead_lag_dataset
from liqcast.training import instance_normalize, normalize_targets, ExogScaler
from liqcast.data import SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST

h, L = 48, 64
for seed in range(5):
    ds = lead_lag_dataset(seed, step_sigma=0.25, phi=0.5, noise_sigma=0.45,
                          n_days=1100, n_val=120)
    tr = np.flatnonzero(ds.split_labels == SPLIT_TRAIN)
    va = np.flatnonzero(ds.split_labels == SPLIT_VALIDATION)
    te = np.flatnonzero(ds.split_labels == SPLIT_TEST)
    scaler = ExogScaler.fit(ds.exog[tr])
    def build(origins):
        w_idx = origins[:, None] - L + 1 + np.arange(L)
        t_idx = origins[:, None] + 1 + np.arange(h)
        wins, st = instance_normalize(ds.prices[w_idx])
        tgt = ds.prices[t_idx]
        ex = scaler.transform(ds.exog[w_idx]).reshape(len(origins), -1)
        return wins, ex, tgt, st
    tr_or = np.arange(tr[0]+L-1, tr[-1]-h+1)
    va_or = np.arange(va[0]-1, va[-1]-h+1)
    te_or = np.arange(te[0]-1, te[-1]-h+1)
    sets = {k: build(o) for k, o in (("tr", tr_or), ("va", va_or), ("te", te_or))}
    out = {}
    for tag in ("endog", "exog"):
        def feats(s):
            Xw, Xe, _, _ = s
            return Xw if tag == "endog" else np.hstack([Xw, Xe])
        best = None
        for lam in (1e-2, 1e-1, 1.0, 10.0, 100.0):
            A = np.hstack([feats(sets["tr"]), np.ones((len(tr_or), 1))])
            Yn = normalize_targets(sets["tr"][2], sets["tr"][3])
            W = np.linalg.solve(A.T @ A + lam*np.eye(A.shape[1]), A.T @ Yn)
            def raw_mse(key):
                s = sets[key]
                P = np.hstack([feats(s), np.ones((len(s[0]), 1))]) @ W
                praw = P * s[3].std + s[3].mean
                return float(np.mean((praw - s[2])**2))
            vm = raw_mse("va")
            if best is None or vm < best[0]:
                best = (vm, lam, raw_mse("te"))
        out[tag] = best
    print(f"seed={seed}: endog test={out['endog'][2]:.3f} (lam={out['endog'][1]}) "
          f"exog test={out['exog'][2]:.3f} (lam={out['exog'][1]}) "
          f"ratio={out['endog'][2]/out['exog'][2]:.2f}")
