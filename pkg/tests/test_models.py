import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acceltime.graph import K, absorb, data_volume, make_layer, op_count
from acceltime.learn import ForestParams, fit_forest, fit_tree
from acceltime.models import (
    HardwareConstants,
    PlatformModel,
    PlatformModelError,
    fuse_adjust,
    fusion_row,
    load_platform_model,
    mixed_time,
    platform_to_dict,
    predict_fusion,
    refined_time,
    roofline_time,
    save_platform_model,
    statistical_time,
    u_eff,
)

P, B = 1e12, 1e10


def test_roofline_example():
    assert roofline_time(1e9, 1e6, P, B) == pytest.approx(1e-3)


def test_pure_data_move():
    assert roofline_time(0, 1e6, P, B) == pytest.approx(1e-4)


def test_roofline_rejects_negative_or_empty():
    with pytest.raises(ValueError):
        roofline_time(-1, 1, P, B)
    with pytest.raises(ValueError):
        roofline_time(0, 0, P, B)


def test_worked_u_eff_example():
    assert u_eff((12, 6), (16, 12), (0, 0)) == pytest.approx(0.375, abs=1e-15)


def test_refined_divides_compute_term():
    assert refined_time(1e9, 1e6, 0.375, P, B) == pytest.approx(1e-3 / 0.375)
    # bandwidth-bound: the efficiency does not matter
    assert refined_time(1e6, 1e9, 0.375, P, B) == roofline_time(1e6, 1e9, P, B)


@settings(max_examples=200, deadline=None)
@given(f=st.floats(1, 1e12), d=st.floats(1, 1e10))
def test_families_coincide_at_full_efficiency(f, d):
    base = roofline_time(f, d, P, B)
    assert refined_time(f, d, 1.0, P, B) == base
    assert statistical_time(f, d, 1.0, P, B) == base
    assert mixed_time(f, d, 1.0, 1.0, P, B) == base


@settings(max_examples=200, deadline=None)
@given(f=st.floats(1, 1e12), d=st.floats(1, 1e10), u=st.floats(0.01, 1), us=st.floats(0.01, 1))
def test_family_ordering_of_bounds(f, d, u, us):
    r = roofline_time(f, d, P, B)
    assert refined_time(f, d, u, P, B) >= r
    assert statistical_time(f, d, us, P, B) >= r
    assert mixed_time(f, d, u, us, P, B) >= max(refined_time(f, d, u, P, B), statistical_time(f, d, us, P, B))
    assert mixed_time(f, d, u, 1.0, P, B) == refined_time(f, d, u, P, B)
    assert mixed_time(f, d, 1.0, us, P, B) == statistical_time(f, d, us, P, B)


def test_half_u_stat_doubles_compute_term():
    assert statistical_time(1e9, 1e3, 0.5, P, B) == pytest.approx(2e-3)


def test_u_stat_is_clamped():
    assert np.isfinite(statistical_time(1e9, 1e3, 0.0, P, B))
    assert statistical_time(1e9, 1e3, 7.0, P, B) == roofline_time(1e9, 1e3, P, B)


def conv(c=64, f=64, h=16):
    return make_layer("conv", K.CONV2D, height=h, width=h, channels=c, filters=f, kernel_h=3, kernel_w=3, stride=1)


def test_fuse_adjust_pool_quarters_output():
    c = conv()
    pool = make_layer("pool", K.MAX_POOL, height=16, width=16, channels=64, kernel_h=2, kernel_w=2, stride=2)
    f_total, d, t = fuse_adjust(c, [pool], 1, lambda op: 1e-6)
    vol = data_volume(c, 1)
    assert d == vol.bytes_in + vol.bytes_weights + vol.bytes_out / 4
    assert f_total == op_count(c) + op_count(pool)
    assert t == pytest.approx(1e-6)


def test_fuse_adjust_zero_cost_follower_only_drops_intermediate():
    c = conv()
    act = make_layer("act", K.ACTIVATION, height=16, width=16, channels=64)
    _, d, t = fuse_adjust(c, [act], 1, lambda op: 0.0)
    assert t == 0.0
    assert d == data_volume(c, 1).total


def test_fuse_adjust_rejects_shape_mismatch():
    bad = make_layer("bn", K.BATCH_NORM, height=16, width=16, channels=32)
    with pytest.raises(ValueError, match="incompatible"):
        fuse_adjust(conv(), [bad], 1, lambda op: 0.0)


def _pool_tree():
    rng = np.random.default_rng(0)
    rows, labels = [], []
    for _ in range(400):
        c, f = int(rng.integers(8, 160)), int(rng.integers(8, 160))
        a = conv(c, f)
        p = make_layer("pool", K.MAX_POOL, height=16, width=16, channels=f, kernel_h=2, kernel_w=2, stride=2)
        rows.append(fusion_row(a, p))
        labels.append(float(c > 52 and f > 52))
    return fit_tree(np.array(rows), np.array(labels), task="classification")


def test_pool_fusion_tree_follows_oracle_rule():
    tree = _pool_tree()
    pool = make_layer("pool", K.MAX_POOL, height=16, width=16, channels=64, kernel_h=2, kernel_w=2, stride=2)
    assert predict_fusion(conv(64, 64), pool, tree)
    small = make_layer("pool", K.MAX_POOL, height=16, width=16, channels=8, kernel_h=2, kernel_w=2, stride=2)
    assert not predict_fusion(conv(8, 8), small, tree)
    assert not predict_fusion(conv(64, 64), pool, None)


def test_bn_and_activation_always_fuse():
    bn = make_layer("bn", K.BATCH_NORM, height=16, width=16, channels=64)
    act = make_layer("act", K.ACTIVATION, height=16, width=16, channels=64)
    assert predict_fusion(conv(), bn, None) and predict_fusion(absorb(conv(), bn), act, None)
    # a non-anchor producer never absorbs anything
    add = make_layer("add", K.ELEMWISE_ADD, height=16, width=16, channels=64)
    assert not predict_fusion(add, act, None)


def small_model():
    consts = HardwareConstants(P, B, (16, 12), (0.3, 0.1), ("c", "f"), 1,
                               {"MaxPool": (1e11, 1.2e10)}, ("Conv2D",))
    rng = np.random.default_rng(1)
    X = rng.random((40, 11)) * 100
    forest = fit_forest(X, 0.5 + 0.4 * rng.random(40), ForestParams(n_trees=4))
    return PlatformModel(consts, {"Conv2D": forest}, {("Conv2D", "MaxPool"): _pool_tree()}, {"device": "t"})


def test_platform_model_round_trip(tmp_path):
    model = small_model()
    save_platform_model(model, tmp_path / "m.json")
    again = load_platform_model(tmp_path / "m.json")
    probe = [conv(c, f) for c in (8, 33, 64, 150) for f in (12, 50, 99)]
    assert [again.u_stat_of(x) for x in probe] == [model.u_stat_of(x) for x in probe]
    assert [again.u_eff_of(x) for x in probe] == [model.u_eff_of(x) for x in probe]
    assert again.constants == model.constants
    assert platform_to_dict(again) == platform_to_dict(model)


def test_future_version_rejected(tmp_path):
    doc = platform_to_dict(small_model())
    doc["version"] = 2
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(PlatformModelError, match="version"):
        load_platform_model(tmp_path / "m.json")


def test_truncated_file_is_schema_error(tmp_path):
    save_platform_model(small_model(), tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    (tmp_path / "cut.json").write_text(text[: len(text) // 2])
    with pytest.raises(PlatformModelError, match="schema"):
        load_platform_model(tmp_path / "cut.json")


def test_missing_section_is_schema_error(tmp_path):
    doc = platform_to_dict(small_model())
    del doc["constants"]["p_peak"]
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(PlatformModelError, match="schema"):
        load_platform_model(tmp_path / "m.json")


def test_u_stat_targets_must_be_efficiencies():
    X = np.ones((4, 11))
    forest = fit_forest(X, np.array([0.5, 1.5, 0.7, 0.9]), ForestParams(n_trees=1))
    with pytest.raises(PlatformModelError):
        PlatformModel(HardwareConstants(P, B), {"Conv2D": forest})
