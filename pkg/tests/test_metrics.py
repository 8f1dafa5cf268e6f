import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acceltime.metrics import (
    UndefinedMetricError,
    confusion,
    mcc_defined,
    metric_f1,
    metric_mae,
    metric_mape,
    metric_mcc,
    metric_rmspe,
    metric_spearman,
)


def test_single_pair_errors():
    assert metric_mae([10], [12]) == pytest.approx(2, abs=1e-12)
    assert metric_mape([10], [12]) == pytest.approx(20, abs=1e-12)
    assert metric_rmspe([10], [12]) == pytest.approx(20, abs=1e-12)


def test_spearman_with_hand_ranks():
    assert metric_spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-12)


def test_f1_and_mcc_example():
    assert metric_f1(90, 10, 10, 90) == pytest.approx(0.9, abs=1e-12)
    assert metric_mcc(90, 10, 10, 90) == pytest.approx(0.8, abs=1e-12)


def test_perfect_and_inverted_classifier():
    assert metric_f1(40, 0, 0, 60) == 1.0 and metric_mcc(40, 0, 0, 60) == 1.0
    assert metric_mcc(0, 60, 40, 0) == -1.0


def test_degenerate_mcc_is_zero_and_flagged():
    assert metric_mcc(0, 0, 0, 10) == 0.0
    assert not mcc_defined(0, 0, 0, 10)
    with pytest.raises(ValueError):
        metric_mcc(0, 0, 0, 0)


def test_confusion_counts():
    assert confusion([1, 1, 0, 0, 1], [1, 0, 0, 1, 1]) == (2, 1, 1, 1)


def test_percentage_metrics_need_nonzero_measurements():
    with pytest.raises(ValueError):
        metric_mape([0, 1], [1, 1])
    with pytest.raises(ValueError):
        metric_rmspe([0.0], [1.0])


def test_spearman_undefined_cases():
    with pytest.raises(UndefinedMetricError):
        metric_spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedMetricError):
        metric_spearman([1], [2])


def test_spearman_ties_use_average_ranks():
    assert metric_spearman([1, 2, 2, 3], [1, 2, 2, 3]) == pytest.approx(1.0)


def test_weighted_mape_emphasises_large_pairs():
    m, e = [1.0, 100.0], [2.0, 100.0]
    assert metric_mape(m, e, weighted=True) < metric_mape(m, e)


positive = st.lists(st.floats(0.01, 1e3), min_size=2, max_size=30, unique=True)


@settings(max_examples=150, deadline=None)
@given(positive)
def test_identity_and_monotone_transforms(m):
    m = np.array(m)
    assert metric_mae(m, m) == metric_mape(m, m) == metric_rmspe(m, m) == 0.0
    assert metric_spearman(m, 2 * m) == pytest.approx(1.0)
    assert metric_spearman(m, -m) == pytest.approx(-1.0)


@settings(max_examples=150, deadline=None)
@given(positive, st.floats(0.1, 10), st.floats(0.1, 10))
def test_homogeneity(m, ratio, k):
    m = np.array(m)
    e = m * ratio
    assert metric_mape(k * m, k * e) == pytest.approx(metric_mape(m, e))
    assert metric_rmspe(k * m, k * e) == pytest.approx(metric_rmspe(m, e))
    assert metric_mae(k * m, k * e) == pytest.approx(k * metric_mae(m, e))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50))
def test_classification_metric_ranges(pairs):
    counts = confusion([a for a, _ in pairs], [p for _, p in pairs])
    assert 0.0 <= metric_f1(*counts) <= 1.0
    assert -1.0 - 1e-12 <= metric_mcc(*counts) <= 1.0 + 1e-12


@settings(max_examples=100, deadline=None)
@given(positive, positive)
def test_spearman_range(a, b):
    n = min(len(a), len(b))
    rho = metric_spearman(a[:n], b[:n])
    assert -1.0 <= rho <= 1.0
