"""Loss, Adam, normalization, early stopping, and the training loop."""

from datetime import date, timedelta

import numpy as np
import pytest

from liqcast.autodiff import Tape, Tensor
from liqcast.data import (SPLIT_TEST, SPLIT_TRAIN, SPLIT_VALIDATION,
                          AlignedDataset, daily_range)
from liqcast.errors import ContractError, OptimizationError, SizingError
from liqcast.models import (LinearConfig, LinearForecaster, NaiveConfig,
                            NaivePersistence, NBeatsConfig, NBeatsLite,
                            TimeXer, TimeXerConfig)
from liqcast.training import (AdamState, EarlyStopper, ExogScaler, TrainConfig,
                              adam_step, denormalize, instance_normalize, mse,
                              normalize, normalize_targets, train)


# ---------------------------------------------------------------------------
# mse
# ---------------------------------------------------------------------------

def test_mse_identity_is_zero():
    y = np.array([1.0, 2.0, 3.0])
    assert mse(y, y.copy()).item() == 0.0


def test_mse_hand_arithmetic():
    assert mse(np.array([0.0, 0.0]), np.array([1.0, 3.0])).item() == 5.0


def test_mse_gradient_is_analytic():
    y = np.array([1.0, -1.0, 0.5, 2.0])
    y_hat = Tensor(np.array([0.0, 1.0, 1.0, -2.0]), requires_grad=True)
    with Tape() as tape:
        loss = mse(Tensor(y), y_hat)
    tape.backward(loss)
    assert np.array_equal(y_hat.grad, 2.0 * (y_hat.data - y) / 4.0)


def test_mse_length_mismatch():
    with pytest.raises(ContractError):
        mse(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def test_constant_window_normalizes_to_zero_and_inverts():
    (nw, _), state = normalize(np.full((1, 6), 7.25))
    assert np.array_equal(nw, np.zeros((1, 6)))
    assert np.allclose(denormalize(np.zeros((1, 3)), state), 7.25)


def test_two_point_window_hand_case():
    nw, state = instance_normalize(np.array([[1.0, 3.0]]))
    assert state.mean[0, 0] == 2.0 and state.std[0, 0] == 1.0
    assert nw.tolist() == [[-1.0, 1.0]]


def test_normalize_round_trip():
    rng = np.random.default_rng(0)
    w = rng.normal(size=(5, 12)) * 40 + 300
    nw, state = instance_normalize(w)
    back = denormalize(nw, state)
    assert np.allclose(back, w, rtol=1e-12)


def test_exog_scaler_freezes_statistics():
    rng = np.random.default_rng(1)
    train_rows = rng.normal(size=(50, 3)) * 2 + 5
    scaler = ExogScaler.fit(train_rows)
    z = scaler.transform(train_rows)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-12)
    other = rng.normal(size=(4, 7, 3))
    assert np.allclose(scaler.transform(other),
                       (other - scaler.means) / scaler.stds)


# ---------------------------------------------------------------------------
# adam
# ---------------------------------------------------------------------------

def test_adam_zero_gradient_is_identity():
    p = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
    state = AdamState.for_params(p)
    adam_step(p, {"w": np.zeros(2)}, state, lr=0.1)
    assert p["w"].data.tolist() == [1.0, -2.0]
    assert np.all(state.m["w"] == 0.0) and np.all(state.v["w"] == 0.0)


def scalar_adam_reference(w0, grad_fn, lr, steps,
                          beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent scalar implementation of bias-corrected Adam."""
    w, m, v = w0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    return w


def test_adam_first_step_magnitude():
    for g in (2.5, -0.3, 10.0):
        p = {"w": Tensor(np.array([1.0]), requires_grad=True)}
        adam_step(p, {"w": np.array([g])}, AdamState.for_params(p), lr=0.01)
        delta = p["w"].data[0] - 1.0
        assert np.sign(delta) == -np.sign(g)
        assert 0.999 * 0.01 <= abs(delta) <= 0.01
        ref = scalar_adam_reference(1.0, lambda w: g, 0.01, 1)
        assert p["w"].data[0] == pytest.approx(ref, abs=1e-15)


def test_adam_converges_on_quadratic():
    p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
    state = AdamState.for_params(p)
    for _ in range(500):
        adam_step(p, {"w": 2.0 * (p["w"].data - 3.0)}, state, lr=0.05)
    ref = scalar_adam_reference(0.0, lambda w: 2.0 * (w - 3.0), 0.05, 500)
    assert abs(p["w"].data[0] - 3.0) < 0.05
    assert p["w"].data[0] == pytest.approx(ref, abs=1e-12)


def test_adam_aborts_on_non_finite_gradient():
    p = {"theta": Tensor(np.array([1.0]), requires_grad=True)}
    with pytest.raises(OptimizationError) as exc:
        adam_step(p, {"theta": np.array([np.nan])}, AdamState.for_params(p), lr=0.01)
    assert "theta" in str(exc.value)


# ---------------------------------------------------------------------------
# early stopping bookkeeping
# ---------------------------------------------------------------------------

def test_early_stopper_patience_one_stops_after_second_epoch():
    p = {"w": Tensor(np.array([1.0]), requires_grad=True)}
    stopper = EarlyStopper(patience=1)
    assert not stopper.observe(1, 1.0, p)  # epoch 1: improvement
    p["w"].data[0] = 99.0
    assert stopper.observe(2, 2.0, p)      # epoch 2: worse -> stop
    stopper.restore(p)
    assert p["w"].data[0] == 1.0           # epoch-1 weights back
    assert stopper.best_epoch == 1


def test_early_stopper_tracks_running_best():
    p = {"w": Tensor(np.array([0.0]), requires_grad=True)}
    stopper = EarlyStopper(patience=2)
    for epoch, val in enumerate([3.0, 2.0, 2.5, 1.0, 1.5, 1.4], start=1):
        p["w"].data[0] = float(epoch)
        stopped = stopper.observe(epoch, val, p)
    assert stopped
    assert stopper.best_epoch == 4
    stopper.restore(p)
    assert p["w"].data[0] == 4.0


# ---------------------------------------------------------------------------
# training loop on synthetic datasets
# ---------------------------------------------------------------------------

def small_dataset(n_train=90, n_val=40, n_test=40, price_fn=None, exog_fn=None,
                  n_exog=2):
    n = n_train + n_val + n_test
    if price_fn is None:
        price_fn = lambda i: 100.0 + 0.1 * i
    dates = daily_range(date(2023, 1, 1), date(2023, 1, 1) + timedelta(days=n - 1))
    prices = np.array([price_fn(i) for i in range(n)])
    if exog_fn is None:
        exog = np.column_stack([prices * (0.5 + 0.1 * j) for j in range(n_exog)])
    else:
        exog = np.column_stack([[exog_fn(i, j) for i in range(n)] for j in range(n_exog)])
    labels = np.array([SPLIT_TRAIN] * n_train + [SPLIT_VALIDATION] * n_val
                      + [SPLIT_TEST] * n_test, dtype="<U10")
    return AlignedDataset(dates, prices, exog, list(range(1, n_exog)), labels)


def test_linear_model_solves_linear_task():
    ds = small_dataset()
    model = LinearForecaster(LinearConfig(horizon=4, lookback=12), seed=0)
    cfg = TrainConfig(batch_size=32, learning_rate=0.05, max_epochs=200,
                      patience=200, seed=0)
    result = train(model, ds, 4, cfg)
    assert result.best_val_mse < 1e-4


def test_same_seed_training_is_bit_identical():
    def run():
        ds = small_dataset(price_fn=lambda i: 50.0 + np.sin(i / 5.0) * 3)
        model = TimeXer(TimeXerConfig(horizon=3, lookback=12, patch_len=4, stride=4,
                                      d_model=8, n_layers=1, n_heads=2, d_ff=8,
                                      dropout=0.2, use_exogenous=True, n_exog=2),
                        seed=7)
        cfg = TrainConfig(batch_size=16, learning_rate=1e-3, max_epochs=4,
                          patience=4, seed=11)
        return train(model, ds, 3, cfg)

    a, b = run(), run()
    for k, p in a.model.parameters().items():
        assert np.array_equal(p.data, b.model.parameters()[k].data)
    fields = ("epoch", "train_mse", "val_mse", "lr")
    assert [(r["epoch"], r["train_mse"], r["val_mse"], r["lr"]) for r in a.log] \
        == [(r["epoch"], r["train_mse"], r["val_mse"], r["lr"]) for r in b.log]


def test_gradient_batches_never_touch_validation_or_test_rows():
    ds = small_dataset(price_fn=lambda i: 10.0 + np.cos(i / 3.0))
    model = NBeatsLite(NBeatsConfig(horizon=5, lookback=10, n_blocks=1,
                                    hidden=8, block_layers=1), seed=1)
    result = train(model, ds, 5, TrainConfig(batch_size=32, learning_rate=1e-3,
                                             max_epochs=3, patience=3, seed=0))
    non_train = ds.split_labels != SPLIT_TRAIN
    assert not np.any(result.gradient_rows & non_train)
    assert result.gradient_rows.any()


def test_early_stopping_restores_best_epoch_weights():
    def fresh():
        ds = small_dataset(price_fn=lambda i: 20.0 + np.sin(i / 4.0) * 5)
        model = LinearForecaster(LinearConfig(horizon=3, lookback=8), seed=3)
        return ds, model

    ds, model = fresh()
    full = train(model, ds, 3, TrainConfig(batch_size=16, learning_rate=0.3,
                                           max_epochs=12, patience=2, seed=2))
    best = full.best_epoch
    assert best < full.stopped_epoch or full.stopped_epoch == 12
    ds2, model2 = fresh()
    rerun = train(model2, ds2, 3, TrainConfig(batch_size=16, learning_rate=0.3,
                                              max_epochs=best, patience=best + 1, seed=2))
    assert rerun.best_epoch == best
    for k, p in model.parameters().items():
        assert np.array_equal(p.data, model2.parameters()[k].data)


def test_log_has_one_line_per_epoch():
    ds = small_dataset()
    model = LinearForecaster(LinearConfig(horizon=2, lookback=6), seed=4)
    result = train(model, ds, 2, TrainConfig(batch_size=64, learning_rate=1e-3,
                                             max_epochs=3, patience=3, seed=0))
    assert [r["epoch"] for r in result.log] == [1, 2, 3]
    assert all({"epoch", "train_mse", "val_mse", "lr", "elapsed_ms"} <= set(r)
               for r in result.log)


def test_naive_model_trains_without_parameters():
    ds = small_dataset()
    model = NaivePersistence(NaiveConfig(horizon=3, lookback=6))
    result = train(model, ds, 3, TrainConfig(batch_size=8, learning_rate=1e-3,
                                             max_epochs=5, patience=2, seed=0))
    assert len(result.log) == 1
    assert result.best_val_mse == result.log[0]["val_mse"]


def test_sizing_error_when_train_split_too_short():
    ds = small_dataset(n_train=10)
    model = LinearForecaster(LinearConfig(horizon=8, lookback=12), seed=5)
    with pytest.raises(SizingError):
        train(model, ds, 8, TrainConfig(batch_size=8, learning_rate=1e-3,
                                        max_epochs=2, patience=1, seed=0))


def test_horizon_mismatch_is_contract_error():
    ds = small_dataset()
    model = LinearForecaster(LinearConfig(horizon=4, lookback=8), seed=6)
    with pytest.raises(ContractError):
        train(model, ds, 5, TrainConfig(batch_size=8, learning_rate=1e-3,
                                        max_epochs=1, patience=1, seed=0))


# ---------------------------------------------------------------------------
# first-steps descent and scale equivariance
# ---------------------------------------------------------------------------

def wave_dataset(scale=1.0):
    rng = np.random.default_rng(42)
    noise = rng.normal(size=200) * 0.3
    return small_dataset(
        n_train=120, n_val=40, n_test=40,
        price_fn=lambda i: scale * (30.0 + 4.0 * np.sin(i / 6.0) + noise[i]),
        exog_fn=lambda i, j: scale * (15.0 + 2.0 * np.cos(i / 6.0 + j)),
    )


MODELS = {
    "timexer_exog": lambda: TimeXer(
        TimeXerConfig(horizon=4, lookback=16, patch_len=4, stride=4, d_model=8,
                      n_layers=1, n_heads=2, d_ff=8, dropout=0.0,
                      use_exogenous=True, n_exog=2), seed=0),
    "timexer_endog": lambda: TimeXer(
        TimeXerConfig(horizon=4, lookback=16, patch_len=4, stride=4, d_model=8,
                      n_layers=1, n_heads=2, d_ff=8, dropout=0.0,
                      use_exogenous=False, n_exog=0), seed=0),
    "nbeats": lambda: NBeatsLite(NBeatsConfig(horizon=4, lookback=16, n_blocks=2,
                                              hidden=8, block_layers=2), seed=0),
    "linear": lambda: LinearForecaster(LinearConfig(horizon=4, lookback=16), seed=0),
}


@pytest.mark.parametrize("name", sorted(MODELS))
def test_loss_decreases_over_first_50_steps(name):
    ds = wave_dataset()
    model = MODELS[name]()
    scaler = ExogScaler.fit(ds.exog[ds.split_indices(SPLIT_TRAIN)])
    rng = np.random.default_rng(0)
    rows = np.arange(16)[None, :] + np.arange(32)[:, None]
    windows = ds.prices[rows]
    targets = ds.prices[rows[:, -1:] + np.arange(1, 5)]
    exog = scaler.transform(ds.exog[rows]) if model.uses_exogenous else None
    (nw, _), state = normalize(windows)
    t_norm = normalize_targets(targets, state)
    params = model.parameters()
    adam = AdamState.for_params(params)
    losses = []
    for _ in range(50):
        for p in params.values():
            p.grad = None
        with Tape() as tape:
            loss = mse(Tensor(t_norm), model.forward(nw, exog, training=False))
        tape.backward(loss)
        losses.append(loss.item())
        adam_step(params, {k: p.grad for k, p in params.items()}, adam, 1e-4)
    assert losses[-1] < losses[0]


@pytest.mark.parametrize("factory_name", ["linear", "timexer_exog"])
def test_rescaling_data_scales_mse_quadratically(factory_name):
    # per-sample norm on the target plus frozen z-scoring on exogenous
    # columns makes training exactly equivariant under a x8 rescale
    results = {}
    for scale in (1.0, 8.0):
        ds = wave_dataset(scale)
        model = MODELS[factory_name]()
        cfg = TrainConfig(batch_size=32, learning_rate=1e-3, max_epochs=3,
                          patience=3, seed=9)
        results[scale] = train(model, ds, 4, cfg)
    for r1, r8 in zip(results[1.0].log, results[8.0].log):
        assert r8["val_mse"] == pytest.approx(64.0 * r1["val_mse"], rel=1e-6)
    assert results[8.0].best_val_mse == pytest.approx(
        64.0 * results[1.0].best_val_mse, rel=1e-6)
