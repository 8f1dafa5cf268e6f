import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acceltime.bench import SweepSpec, generate_configs, index_table, run_benchmark
from acceltime.learn import (
    ForestModel,
    ForestParams,
    TreeModel,
    UnrollingFitError,
    efficiency,
    fit_forest,
    fit_tree,
    fit_unrolling,
)
from acceltime.oracle import OracleDevice, default_oracle

# ---------------------------------------------------------------- trees


def test_channel_threshold_gives_depth_one_tree():
    c = np.arange(8, 120)
    X = np.stack([np.full_like(c, 16), c, np.full_like(c, 3)], axis=1)
    y = (c > 52).astype(float)
    tree = fit_tree(X, y, task="classification")
    assert tree.depth == 1
    assert tree.feature[0] == 1 and tree.threshold[0] == 52.5
    assert np.array_equal(tree.predict(X), y)


def test_constant_target_is_single_leaf():
    X = np.random.default_rng(0).random((40, 4))
    tree = fit_tree(X, np.full(40, 0.7))
    assert tree.n_nodes == 1 and tree.predict(X[:3]).tolist() == [0.7] * 3


def test_regression_tree_fits_step():
    x = np.linspace(0, 1, 50)[:, None]
    y = np.where(x[:, 0] < 0.3, 1.0, 5.0)
    assert np.allclose(fit_tree(x, y).predict(x), y)


def test_max_depth_respected():
    X = np.random.default_rng(1).random((200, 3))
    y = np.sin(10 * X[:, 0]) + X[:, 1]
    assert fit_tree(X, y, max_depth=3).depth <= 3


def test_min_samples_leaf_respected():
    X = np.random.default_rng(2).random((100, 2))
    y = X[:, 0] * 3
    tree = fit_tree(X, y, min_samples_leaf=10)
    leaves, counts = np.unique(tree.apply(X), return_counts=True)
    assert counts.min() >= 10


def test_tree_round_trip():
    X = np.random.default_rng(3).random((80, 3))
    y = (X[:, 0] + X[:, 2] > 1).astype(float)
    tree = fit_tree(X, y, task="classification")
    again = TreeModel.from_dict(tree.to_dict())
    assert np.array_equal(again.predict(X), tree.predict(X))


def test_tree_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_tree(np.empty((0, 2)), np.empty(0))
    with pytest.raises(ValueError):
        fit_tree(np.ones((3, 2)), np.ones(2))


# ---------------------------------------------------------------- forests


def test_single_tree_forest_equals_tree():
    rng = np.random.default_rng(4)
    X = rng.random((60, 5))
    y = X[:, 0] ** 2 + X[:, 3]
    forest = fit_forest(X, y, ForestParams(n_trees=1, bootstrap=False, max_features=5, min_samples_leaf=1,
                                           clamp=None))
    tree = fit_tree(X, y)
    probe = rng.random((30, 5))
    assert np.array_equal(forest.predict(probe), tree.predict(probe))


def test_forest_prediction_stays_in_target_range():
    rng = np.random.default_rng(5)
    X = rng.random((100, 3))
    y = 0.2 + 0.6 * X[:, 0]
    forest = fit_forest(X, y, ForestParams(n_trees=20))
    far = np.array([[1e9, -1e9, 1e9], [-1e9, 1e9, 0.0]])
    pred = forest.predict(far)
    assert np.all((pred >= y.min()) & (pred <= y.max()))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.001, 1.0), min_size=6, max_size=40), st.integers(0, 1000))
def test_forest_predictions_within_unit_interval(targets, seed):
    y = np.array(targets)
    X = np.random.default_rng(seed).random((len(y), 3)) * 100
    forest = fit_forest(X, y, ForestParams(n_trees=5, seed=seed))
    pred = forest.predict(np.random.default_rng(seed + 1).random((10, 3)) * 1e6)
    assert np.all((pred > 0) & (pred <= 1))


def test_forest_is_seeded_and_round_trips():
    rng = np.random.default_rng(6)
    X, y = rng.random((50, 4)), rng.random(50)
    a = fit_forest(X, y, ForestParams(n_trees=8, seed=11))
    b = fit_forest(X, y, ForestParams(n_trees=8, seed=11))
    assert np.array_equal(a.predict(X), b.predict(X))
    assert np.array_equal(ForestModel.from_dict(a.to_dict()).predict(X), a.predict(X))


# ---------------------------------------------------------------- unrolling


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4096), st.integers(1, 64), st.floats(0, 1)), min_size=1, max_size=4))
def test_efficiency_domain(axes):
    x = np.array([[a[0] for a in axes]], dtype=float)
    s = [a[1] for a in axes]
    alpha = [a[2] for a in axes]
    u = efficiency(x, s, alpha)[0]
    assert 0 < u <= 1 + 1e-12
    assert efficiency(x, s, [1.0] * len(axes))[0] == pytest.approx(1.0)
    aligned = np.array([[si * (1 + a[0] % 5) for si, a in zip(s, axes)]], dtype=float)
    assert efficiency(aligned, s, alpha)[0] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(2, 64), st.floats(0, 0.99))
def test_efficiency_cliff_after_multiple(m, s, alpha):
    # one element past a multiple of s costs a whole extra pass
    at = efficiency(np.array([[m * s]], dtype=float), [s], [alpha])[0]
    past = efficiency(np.array([[m * s + 1]], dtype=float), [s], [alpha])[0]
    assert at == pytest.approx(1.0) and past < at


def test_worked_efficiency_example():
    assert efficiency(np.array([[12.0, 6.0]]), (16, 12), (0.0, 0.0))[0] == pytest.approx(0.375, abs=1e-15)


def axis_records(**oracle):
    spec = SweepSpec("Conv2D", dict(h=range(8, 65), w=range(8, 65), c=range(8, 97), f=range(8, 97), k=(3,),
                                    stride=(1,)), mode="axis-sweep")
    return run_benchmark(index_table(generate_configs(spec)), OracleDevice(default_oracle(**oracle))).records


def test_recovers_zero_alpha_oracle():
    fit = fit_unrolling(axis_records(alpha=(0.0, 0.0)))
    assert fit.unrolled == (("c", 16, pytest.approx(0.0, abs=1e-6)), ("f", 12, pytest.approx(0.0, abs=1e-6)))
    assert fit.p_peak_final == pytest.approx(1e12, rel=1e-3)


def test_recovers_default_oracle_quickly():
    start = time.perf_counter()
    fit = fit_unrolling(axis_records())
    assert time.perf_counter() - start < 60
    assert fit.s == (1, 1, 16, 12)
    assert fit.alpha[2:] == pytest.approx((0.3, 0.1), abs=1e-6)
    assert fit.p_peak_final == pytest.approx(1e12, rel=1e-6)
    assert fit.b_peak_final == pytest.approx(1e10, rel=1e-6)


def test_no_parallel_dims_gives_unit_vector():
    fit = fit_unrolling(axis_records(s=(1, 1), alpha=(0.3, 0.1)), candidate_axes=("c", "f"))
    assert fit.s == (1, 1) and fit.alpha == (1.0, 1.0)


def test_unit_alpha_gives_unit_vector():
    fit = fit_unrolling(axis_records(alpha=(1.0, 1.0)), candidate_axes=("c", "f"))
    assert fit.s == (1, 1) and fit.alpha == (1.0, 1.0)


def test_noise_does_not_invent_axes():
    fit = fit_unrolling(axis_records(noise_rel_sigma=0.05))
    assert fit.s == (1, 1, 16, 12)
    assert fit.alpha[2:] == pytest.approx((0.3, 0.1), abs=0.02)


def test_insufficient_coverage_is_reported():
    spec = SweepSpec("Conv2D", dict(h=(8,), w=(8,), c=range(8, 12), f=range(8, 40), k=(3,)), mode="axis-sweep")
    recs = run_benchmark(index_table(generate_configs(spec)), OracleDevice(default_oracle())).records
    with pytest.raises(UnrollingFitError, match="coverage"):
        fit_unrolling(recs, candidate_axes=("c", "f"))
