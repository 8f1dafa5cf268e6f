import math

import numpy as np
import pytest

from acceltime.graph import K, NetworkGraph, make_layer, op_count
from acceltime.oracle import (
    FUSED,
    POSSIBLY_FUSED,
    MemoryTerm,
    OracleSpec,
    default_oracle,
    load_oracle,
    oracle_from_dict,
    oracle_latency,
    oracle_to_dict,
    profile_network,
    save_oracle,
    true_latency,
)


def conv(name="conv", h=32, w=32, c=64, f=64, k=3):
    return make_layer(name, K.CONV2D, height=h, width=w, channels=c, filters=f, kernel_h=k, kernel_w=k, stride=1)


def test_aligned_compute_bound_layer_runs_at_peak():
    spec = default_oracle()
    layer = conv(c=64, f=96)
    assert oracle_latency(layer, spec) == pytest.approx(op_count(layer) / spec.p_peak, rel=1e-15)


def test_worked_efficiency_example():
    spec = default_oracle(axis_map=("h", "w"), alpha=(0.0, 0.0), b_peak=1e16)
    layer = make_layer("c", K.CONV2D, height=12, width=6, channels=256, filters=256, kernel_h=3, kernel_w=3,
                       stride=1)
    assert oracle_latency(layer, spec) == pytest.approx(op_count(layer) / spec.p_peak / 0.375, rel=1e-12)


def test_same_seed_same_time():
    spec = default_oracle(noise_rel_sigma=0.05)
    layer = conv()
    assert oracle_latency(layer, spec, 7) == oracle_latency(layer, spec, 7)
    assert oracle_latency(layer, spec, 7) != oracle_latency(layer, spec, 8)


def test_overhead_added_once_per_layer():
    base, slow = default_oracle(), default_oracle(overhead_sec=1e-6)
    assert oracle_latency(conv(), slow) - oracle_latency(conv(), base) == pytest.approx(1e-6)


def test_noise_never_makes_time_non_positive():
    spec = default_oracle(noise_rel_sigma=2.0)
    times = [oracle_latency(conv(), spec, s) for s in range(300)]
    assert min(times) > 0.5 * true_latency(conv(), spec)


def test_mean_of_twenty_within_five_sigma():
    sigma = 0.05
    spec = default_oracle(noise_rel_sigma=sigma)
    src = make_layer("in", K.DATA_INPUT, height=32, width=32, channels=64)
    g = NetworkGraph((src, conv()), (("in", "conv"),))
    truth = true_latency(conv(), spec)
    for seed in range(50):
        t = profile_network(g, spec, n_iter=20, rng_seed=seed)[0].time_sec
        assert abs(t / truth - 1) <= 5 * sigma / math.sqrt(20)


def test_memory_term_slows_large_layers_only():
    spec = default_oracle(memory_term=MemoryTerm(buffer_bytes=2**16, floor=0.5))
    small, big = conv(h=4, w=4, c=16, f=12), conv(h=64, w=64, c=512, f=516)
    plain = default_oracle()
    assert true_latency(small, spec) / true_latency(small, plain) < 1.2
    assert true_latency(big, spec) / true_latency(big, plain) > 1.5


def chain_graph(*layers):
    src = make_layer("in", K.DATA_INPUT, height=layers[0].height, width=layers[0].width,
                     channels=layers[0].channels)
    names = ["in"] + [x.name for x in layers]
    return NetworkGraph((src,) + layers, tuple(zip(names, names[1:])))


def test_conv_bn_act_collapses_to_one_measurement():
    c = conv()
    g = chain_graph(c, make_layer("bn", K.BATCH_NORM, height=32, width=32, channels=64),
                    make_layer("act", K.ACTIVATION, height=32, width=32, channels=64))
    meas = profile_network(g, default_oracle())
    assert len(meas) == 1
    assert meas[0].fused_flags == {"BatchNorm": FUSED, "Activation": FUSED}


@pytest.mark.parametrize("channels,fused", [(64, True), (32, False)])
def test_conv_maxpool_threshold(channels, fused):
    c = conv(c=channels, f=channels)
    p = make_layer("pool", K.MAX_POOL, height=32, width=32, channels=channels, kernel_h=2, kernel_w=2, stride=2)
    meas = profile_network(chain_graph(c, p), default_oracle())
    assert (len(meas) == 1) is fused
    if fused:
        assert meas[0].fused_flags == {"MaxPool": FUSED}
        assert meas[0].layer.pool_h == 2


def test_parallel_convs_into_add_are_possibly_fused():
    src = make_layer("in", K.DATA_INPUT, height=16, width=16, channels=32)
    a, b = conv("a", 16, 16, 32, 32), conv("b", 16, 16, 32, 32)
    add = make_layer("add", K.ELEMWISE_ADD, height=16, width=16, channels=32)
    g = NetworkGraph((src, a, b, add), (("in", "a"), ("in", "b"), ("a", "add"), ("b", "add")))
    meas = {m.name: m for m in profile_network(g, default_oracle())}
    assert set(meas) == {"a", "b"}
    assert meas["a"].fused_flags == {"ElemwiseAdd": POSSIBLY_FUSED}
    assert meas["b"].fused_flags == {"ElemwiseAdd": POSSIBLY_FUSED}


def test_fused_time_is_anchor_plus_follower_standalone():
    spec = default_oracle(b_peak=1e16, kind_peaks={"BatchNorm": (1e11, 1e16)})
    c = conv(f=96)
    bn = make_layer("bn", K.BATCH_NORM, height=32, width=32, channels=96)
    meas = profile_network(chain_graph(c, bn), spec)
    assert meas[0].time_sec == pytest.approx(op_count(c) / 1e12 + op_count(bn) / 1e11, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        default_oracle(alpha=(0.3, 1.5))
    with pytest.raises(ValueError):
        default_oracle(s=(16,))
    with pytest.raises(ValueError):
        default_oracle(p_peak=0)


def test_oracle_document_round_trip(tmp_path):
    spec = default_oracle(noise_rel_sigma=0.05, memory_term=MemoryTerm(buffer_bytes=4096))
    assert oracle_from_dict(oracle_to_dict(spec)) == spec
    save_oracle(spec, tmp_path / "o.json")
    assert load_oracle(tmp_path / "o.json") == spec


def test_oracle_document_version_checked():
    doc = oracle_to_dict(default_oracle())
    doc["version"] = 99
    with pytest.raises(ValueError, match="version"):
        oracle_from_dict(doc)


def test_non_unrolled_kinds_ignore_array_shape():
    spec = OracleSpec(p_peak=1e12, b_peak=1e16, s=(16, 12), alpha=(0.0, 0.0), axis_map=("c", "f"),
                      unrolled_kinds=())
    layer = conv(c=17, f=13)
    assert true_latency(layer, spec) == pytest.approx(op_count(layer) / 1e12)
    assert np.isfinite(true_latency(layer, spec))
