"""Rolling-origin evaluation arithmetic and error-matrix assembly."""

from datetime import date, timedelta

import numpy as np
import pytest

from liqcast.data import (SPLIT_TEST, SPLIT_TRAIN, SPLIT_VALIDATION,
                          AlignedDataset, daily_range)
from liqcast.errors import ContractError, SizingError
from liqcast.evaluation import (MSE_SCALE, ErrorMatrix, ForecastReport,
                                build_error_matrix, rolling_origin, score)

PAPER_HORIZONS = [7, 14, 21, 28, 35, 42, 49, 56, 63, 70]


class NaiveStub:
    """Last-value persistence with the evaluation-facing model surface."""

    name = "naive"
    lookback = 8
    uses_exogenous = False

    def predict(self, windows, exog=None, horizon=None):
        return np.repeat(windows[:, -1:], horizon, axis=1)


def make_dataset(n_train=60, n_val=20, n_test=120, price_fn=float):
    n = n_train + n_val + n_test
    dates = daily_range(date(2024, 1, 1), date(2024, 1, 1) + timedelta(days=n - 1))
    labels = np.array([SPLIT_TRAIN] * n_train + [SPLIT_VALIDATION] * n_val
                      + [SPLIT_TEST] * n_test, dtype="<U10")
    prices = np.array([price_fn(i) for i in range(n)], dtype=float)
    exog = np.column_stack([prices * 0.5, prices * 0.25])
    return AlignedDataset(dates, prices, exog, [1], labels)


@pytest.mark.parametrize("horizon", PAPER_HORIZONS)
def test_origin_count_on_120_day_test_split(horizon):
    ds = make_dataset()
    report = rolling_origin(NaiveStub(), ds, horizon)
    assert len(report.origins) == 120 - horizon + 1


def test_origin_count_by_enumeration():
    # independent enumeration of admissible origins
    ds = make_dataset()
    test_rows = np.flatnonzero(ds.split_labels == SPLIT_TEST)
    horizon = 70
    count = sum(1 for o in range(len(ds))
                if set(range(o + 1, o + 1 + horizon)) <= set(test_rows.tolist()))
    report = rolling_origin(NaiveStub(), ds, horizon)
    assert len(report.origins) == count == 51


def test_single_origin_when_test_equals_horizon():
    ds = make_dataset(n_test=30)
    report = rolling_origin(NaiveStub(), ds, 30)
    assert len(report.origins) == 1


def test_naive_is_perfect_on_constant_series():
    ds = make_dataset(price_fn=lambda i: 42.0)
    report = rolling_origin(NaiveStub(), ds, 7)
    assert report.mse_raw == 0.0


def test_test_split_shorter_than_horizon_errors():
    ds = make_dataset(n_test=10)
    with pytest.raises(SizingError):
        rolling_origin(NaiveStub(), ds, 20)


def test_lookback_may_extend_before_test_split():
    ds = make_dataset(n_train=4, n_val=4, n_test=30)  # history exactly lookback
    report = rolling_origin(NaiveStub(), ds, 30)
    assert len(report.origins) == 1


def test_scaling_identity_is_exact():
    ds = make_dataset(price_fn=lambda i: float(i % 17))
    report = rolling_origin(NaiveStub(), ds, 14)
    assert report.mse_scaled * MSE_SCALE == report.mse_raw
    assert report.mse_scaled == report.mse_raw / 1e7


def make_report(name, predictions, actuals, origins=None):
    predictions = np.asarray(predictions, dtype=float)
    actuals = np.asarray(actuals, dtype=float)
    if origins is None:
        origins = [date(2024, 1, 1) + timedelta(days=i) for i in range(len(predictions))]
    mse = float(np.mean((predictions - actuals) ** 2))
    return ForecastReport(name, predictions.shape[1], origins, predictions,
                          actuals, mse, mse / MSE_SCALE)


def test_score_scaling_definition():
    r = make_report("m", np.zeros((3, 2)), np.full((3, 2), np.sqrt(1e7)))
    raw, scaled = score(r)
    assert scaled == pytest.approx(1.0)


def test_score_hand_arithmetic():
    r = make_report("m", [[0.0, 0.0]], [[1.0, 2.0]])
    raw, scaled = score(r)
    assert raw == 2.5


def test_score_matches_flat_loop_recomputation():
    rng = np.random.default_rng(8)
    preds = rng.normal(size=(9, 5))
    acts = rng.normal(size=(9, 5))
    r = make_report("m", preds, acts)
    total, count = 0.0, 0
    for i in range(9):
        for j in range(5):
            total += (preds[i, j] - acts[i, j]) ** 2
            count += 1
    raw, _ = score(r)
    assert raw == pytest.approx(total / count, rel=1e-12)


def test_report_mse_is_origin_order_invariant():
    rng = np.random.default_rng(4)
    preds = rng.normal(size=(6, 3))
    acts = rng.normal(size=(6, 3))
    perm = rng.permutation(6)
    a = make_report("m", preds, acts)
    b = make_report("m", preds[perm], acts[perm])
    assert score(a)[0] == pytest.approx(score(b)[0], rel=1e-12)


def test_evaluation_is_deterministic():
    ds = make_dataset(price_fn=lambda i: np.sin(i / 3.0))
    a = rolling_origin(NaiveStub(), ds, 10)
    b = rolling_origin(NaiveStub(), ds, 10)
    assert np.array_equal(a.predictions, b.predictions)
    assert a.mse_raw == b.mse_raw


# ---------------------------------------------------------------------------
# error matrix
# ---------------------------------------------------------------------------

def test_identical_models_give_identical_columns():
    preds = np.arange(12, dtype=float).reshape(4, 3)
    acts = preds + 1.0
    em = build_error_matrix([make_report("a", preds, acts),
                             make_report("b", preds, acts)])
    assert np.array_equal(em.data[:, 0], em.data[:, 1])


def test_misaligned_origins_name_the_origin():
    preds = np.zeros((3, 2))
    acts = np.ones((3, 2))
    a = make_report("a", preds, acts)
    b = make_report("b", preds[:2], acts[:2])
    with pytest.raises(ContractError) as exc:
        build_error_matrix([a, b])
    assert "2024-01-03" in str(exc.value)


def test_column_means_equal_report_mse():
    rng = np.random.default_rng(10)
    reports = []
    acts = rng.normal(size=(7, 4))
    for name in ("a", "b", "c"):
        reports.append(make_report(name, rng.normal(size=(7, 4)), acts))
    em = build_error_matrix(reports)
    means = em.column_means()
    for rep in reports:
        assert means[rep.model_name] == pytest.approx(rep.mse_raw, rel=1e-12)


def test_error_matrix_is_origin_major_step_minor():
    preds = np.array([[1.0, 2.0], [3.0, 4.0]])
    acts = np.zeros((2, 2))
    em = build_error_matrix([make_report("a", preds, acts)])
    assert em.data[:, 0].tolist() == [1.0, 4.0, 9.0, 16.0]
    assert em.steps.tolist() == [1, 2, 1, 2]


def test_error_matrix_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    acts = rng.normal(size=(5, 3))
    em = build_error_matrix([make_report("a", rng.normal(size=(5, 3)), acts),
                             make_report("b", rng.normal(size=(5, 3)), acts)])
    p = tmp_path / "errors.csv"
    em.to_csv(p)
    back = ErrorMatrix.from_csv(p, horizon=3)
    assert back.model_names == em.model_names
    assert np.array_equal(back.data, em.data)
    assert back.origin_dates == em.origin_dates
    assert np.array_equal(back.steps, em.steps)
