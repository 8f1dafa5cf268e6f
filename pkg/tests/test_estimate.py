import dataclasses

import pytest

from acceltime.estimate import FALLBACK, apply_mapping, estimate_layer, estimate_network
from acceltime.experiment import measure_network
from acceltime.fitting import FitConfig, InsufficientDataError, fit_platform_model
from acceltime.graph import K, NetworkGraph, chain, make_layer
from acceltime.models import FAMILIES
from acceltime.oracle import OracleDevice
from acceltime.synth import random_network


def conv(name, c=64, f=64, h=16):
    return make_layer(name, K.CONV2D, height=h, width=h, channels=c, filters=f, kernel_h=3, kernel_w=3, stride=1)


def src(c=64, h=16):
    return make_layer("in", K.DATA_INPUT, height=h, width=h, channels=c)


def block(c=64, f=64):
    return chain([src(c), conv("conv", c, f), make_layer("bn", K.BATCH_NORM, height=16, width=16, channels=f),
                  make_layer("relu", K.ACTIVATION, height=16, width=16, channels=f),
                  make_layer("pool", K.MAX_POOL, height=16, width=16, channels=f, kernel_h=2, kernel_w=2,
                             stride=2)])


def test_fit_recovers_device_constants(model, oracle):
    c = model.constants
    assert c.s == oracle.s and c.axis_map == oracle.axis_map
    assert c.alpha == pytest.approx(oracle.alpha, abs=1e-6)
    assert c.p_peak == pytest.approx(oracle.p_peak, rel=1e-9)
    assert c.b_peak == pytest.approx(oracle.b_peak, rel=1e-9)
    assert c.peaks("MaxPool")[1] == pytest.approx(oracle.kind_peaks["MaxPool"][1], rel=1e-9)


def test_fit_without_records_is_insufficient_data():
    with pytest.raises(InsufficientDataError, match="insufficient data"):
        fit_platform_model([], [], FitConfig())


def test_conv_block_with_pool_becomes_one_kernel(model):
    executed = apply_mapping(block(64, 64), model)
    assert [x.name for x in executed.layers] == ["in", "conv"]
    assert [op.kind for op in executed["conv"].fused_ops] == [K.BATCH_NORM, K.ACTIVATION, K.MAX_POOL]


def test_small_conv_keeps_pool_separate(model):
    executed = apply_mapping(block(16, 16), model)
    assert [x.name for x in executed.layers] == ["in", "conv", "pool"]


def test_conv_conv_never_fuses(model):
    g = chain([src(), conv("a"), conv("b")])
    assert len(apply_mapping(g, model)) == 3


def test_residual_add_stays_standalone(model):
    add = make_layer("add", K.ELEMWISE_ADD, height=16, width=16, channels=64)
    g = NetworkGraph((src(), conv("a"), conv("b"), add), (("in", "a"), ("in", "b"), ("a", "add"), ("b", "add")))
    assert "add" in apply_mapping(g, model)


def test_model_used_labels(model):
    c = conv("c", 48, 60)
    assert estimate_layer(c, model, "mixed").model_used == "mixed"
    assert estimate_layer(c, model, "refined").model_used == "refined"
    assert estimate_layer(c, model, "roofline").model_used == "roofline"
    concat = make_layer("cat", K.CONCAT, height=16, width=16, channels=128)
    assert estimate_layer(concat, model, "mixed").model_used == FALLBACK
    pool = make_layer("p", K.AVG_POOL, height=16, width=16, channels=64, kernel_h=3, kernel_w=3, stride=2)
    est = estimate_layer(pool, model, "mixed")
    p, b = model.constants.peaks("AvgPool")
    assert est.model_used == "roofline" and (p, b) != (model.constants.p_peak, model.constants.b_peak)


def test_missing_unrolling_degrades_to_fallback(model):
    bare = dataclasses.replace(model, constants=dataclasses.replace(model.constants, s=(), alpha=(), axis_map=()),
                               u_stat_models={})
    est = estimate_layer(conv("c"), bare, "mixed")
    assert est.model_used == FALLBACK
    assert est.t_hat == estimate_layer(conv("c"), bare, "roofline").t_hat


def test_single_layer_total(model):
    g = chain([src(), conv("c", 64, 64)])
    rep = estimate_network(g, model)
    assert rep.total_sec == rep.layers[0].t_hat


def test_parallel_branches_add_up(model):
    g = NetworkGraph((src(), conv("a"), conv("b", f=96)), (("in", "a"), ("in", "b")))
    rep = estimate_network(g, model, "refined")
    assert rep.total_sec == pytest.approx(sum(e.t_hat for e in rep.layers))
    assert len(rep.layers) == 2


@pytest.mark.parametrize("family", FAMILIES)
def test_estimation_is_deterministic(model, family):
    g = random_network(5)
    assert estimate_network(g, model, family).to_json() == estimate_network(g, model, family).to_json()


def test_mapping_is_idempotent(model):
    for seed in range(5):
        once = apply_mapping(random_network(seed), model)
        assert apply_mapping(once, model) == once


def test_regime_and_effective_performance(model):
    for layer in apply_mapping(random_network(2), model).layers:
        if layer.kind is K.DATA_INPUT:
            continue
        est = estimate_layer(layer, model, "mixed")
        assert est.t_hat > 0 and est.regime in ("compute-bound", "bandwidth-bound")
        assert est.p_eff <= model.constants.peaks(layer.kind)[0] * (1 + 1e-9)


def test_unknown_family_rejected(model):
    with pytest.raises(ValueError):
        estimate_layer(conv("c"), model, "magic")


@pytest.mark.parametrize("seed", range(5))
def test_refined_matches_noiseless_oracle(model, oracle, seed):
    g = random_network(seed)
    measured = measure_network(g, OracleDevice(oracle), n_iter=1)
    assert estimate_network(g, model, "refined").total_sec == pytest.approx(measured, rel=1e-6)
