"""Synthetic accelerator with hidden ground-truth parameters.

The oracle answers profiling requests the way a vendor profiler would:
it fuses adjacent layers according to its own rules, executes the fused
graph, and reports one averaged time per executed layer. Latencies follow
the refined roofline with known peak rates, unrolling vector and
efficiency coefficients, optionally scaled by a memory-efficiency term
that lies outside the analytic model class.
"""

from __future__ import annotations

import json
import operator
from dataclasses import asdict, dataclass, field
from math import ceil, exp
from typing import Optional, Protocol

import numpy as np

from .graph import (
    ANCHOR_KINDS,
    K,
    LayerSpec,
    NetworkGraph,
    data_volume,
    fuse_graph,
    fusion_candidates,
    layer_features,
    op_count,
)

NOT_FUSED = "not-fused"
FUSED = "fused"
POSSIBLY_FUSED = "possibly-fused"
FLAG_STATES = (NOT_FUSED, FUSED, POSSIBLY_FUSED)

_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le, "==": operator.eq}


@dataclass(frozen=True)
class FusionRule:
    """Fuse ``follower`` into ``anchor`` when every condition holds.

    Conditions are ``(subject.feature, op, value)`` triples, e.g.
    ``("anchor.c", ">", 52)``. No conditions means always fuse.
    """

    anchor: str
    follower: str
    conditions: tuple[tuple[str, str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(tuple(c) for c in self.conditions))
        for subject_field, op, _ in self.conditions:
            subject, _, name = subject_field.partition(".")
            if subject not in ("anchor", "follower") or op not in _OPS:
                raise ValueError(f"bad fusion condition {subject_field!r} {op!r}")

    def admits(self, anchor: LayerSpec, follower: LayerSpec) -> bool:
        feats = {"anchor": layer_features(anchor), "follower": layer_features(follower)}
        for subject_field, op, value in self.conditions:
            subject, _, name = subject_field.partition(".")
            if not _OPS[op](getattr(feats[subject], name), value):
                return False
        return True


@dataclass(frozen=True)
class MemoryTerm:
    """Compute slowdown once the working set outgrows an on-chip buffer.

    efficiency = floor + (1 - floor) * exp(-(bytes_in + bytes_weights) / buffer_bytes)
    """

    buffer_bytes: float
    floor: float = 0.6
    kinds: tuple[str, ...] = ("Conv2D",)

    def efficiency(self, layer: LayerSpec, byte_width: int) -> float:
        if layer.kind.value not in self.kinds:
            return 1.0
        vol = data_volume(layer, byte_width)
        return self.floor + (1.0 - self.floor) * exp(-(vol.bytes_in + vol.bytes_weights) / self.buffer_bytes)


@dataclass(frozen=True)
class OracleSpec:
    p_peak: float
    b_peak: float
    s: tuple[int, ...] = ()
    alpha: tuple[float, ...] = ()
    axis_map: tuple[str, ...] = ()
    noise_rel_sigma: float = 0.0
    overhead_sec: float = 0.0
    fusion_rules: tuple[FusionRule, ...] = ()
    byte_width: int = 1
    # per-kind (p_peak, b_peak) for layers the array does not execute at full rate
    kind_peaks: dict = field(default_factory=dict)
    unrolled_kinds: tuple[str, ...] = ("Conv2D",)
    memory_term: Optional[MemoryTerm] = None

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "axis_map", tuple(self.axis_map))
        object.__setattr__(self, "fusion_rules", tuple(
            r if isinstance(r, FusionRule) else FusionRule(**r) for r in self.fusion_rules))
        object.__setattr__(self, "kind_peaks", {k: tuple(v) for k, v in self.kind_peaks.items()})
        if isinstance(self.memory_term, dict):
            object.__setattr__(self, "memory_term", MemoryTerm(**self.memory_term))
        if not (self.p_peak > 0 and self.b_peak > 0):
            raise ValueError("p_peak and b_peak must be positive")
        if not (len(self.s) == len(self.alpha) == len(self.axis_map)):
            raise ValueError("s, alpha and axis_map must have equal length")
        if any(v < 1 for v in self.s):
            raise ValueError("unrolling factors must be positive integers")
        if any(not 0.0 <= a <= 1.0 for a in self.alpha):
            raise ValueError("alpha entries must lie in [0, 1]")
        bad = set(self.axis_map) - {"h", "w", "c", "f"}
        if bad:
            raise ValueError(f"axis_map entries must be among h, w, c, f; got {sorted(bad)}")
        if self.noise_rel_sigma < 0 or self.overhead_sec < 0:
            raise ValueError("noise and overhead must be non-negative")

    def peaks(self, kind) -> tuple[float, float]:
        return self.kind_peaks.get(K(kind).value, (self.p_peak, self.b_peak))

    def rule(self, anchor_kind, follower_kind) -> Optional[FusionRule]:
        for r in self.fusion_rules:
            if r.anchor == K(anchor_kind).value and r.follower == K(follower_kind).value:
                return r
        return None

    def decide(self, anchor: LayerSpec, follower: LayerSpec) -> bool:
        r = self.rule(anchor.kind, follower.kind)
        return r is not None and r.admits(anchor, follower)


def default_fusion_rules() -> tuple[FusionRule, ...]:
    rules = []
    for a in sorted(k.value for k in ANCHOR_KINDS):
        rules.append(FusionRule(a, "BatchNorm"))
        rules.append(FusionRule(a, "Activation"))
    rules += [
        FusionRule("Conv2D", "MaxPool", (("anchor.c", ">", 52), ("anchor.f", ">", 52))),
        FusionRule("Conv2D", "AvgPool", (("follower.k_h", "<=", 3), ("anchor.f", ">", 32))),
        FusionRule("Conv2D", "ElemwiseAdd", (("anchor.f", "<=", 256),)),
    ]
    return tuple(rules)


def default_oracle(**overrides) -> OracleSpec:
    """A 16x12 array device in the spirit of a small int8 DPU."""
    params = dict(
        p_peak=1e12,
        b_peak=1e10,
        s=(16, 12),
        alpha=(0.3, 0.1),
        axis_map=("c", "f"),
        fusion_rules=default_fusion_rules(),
        byte_width=1,
        kind_peaks={
            "DepthwiseConv2D": (2.5e11, 1e10),
            "FullyConnected": (2e11, 8e9),
            "MaxPool": (1e11, 1.2e10),
            "AvgPool": (1e11, 1.2e10),
            "GlobalAvgPool": (5e10, 1.2e10),
            "ElemwiseAdd": (5e10, 1.2e10),
            "Concat": (5e10, 1.2e10),
            "BatchNorm": (2e11, 1.2e10),
            "Activation": (2e11, 1.2e10),
        },
    )
    params.update(overrides)
    return OracleSpec(**params)


def _oracle_u_eff(layer: LayerSpec, spec: OracleSpec) -> float:
    if layer.kind.value not in spec.unrolled_kinds:
        return 1.0
    x = {"h": layer.height, "w": layer.width, "c": layer.channels, "f": layer.filters}
    u = 1.0
    for axis, si, ai in zip(spec.axis_map, spec.s, spec.alpha):
        xi = x[axis]
        u *= 1.0 / (ai + (ceil(xi / si) * si / xi) * (1.0 - ai))
    return u


def compute_seconds(layer: LayerSpec, spec: OracleSpec) -> float:
    """Noise-free compute term of one (unfused) layer."""
    p = spec.peaks(layer.kind)[0]
    eff = _oracle_u_eff(layer, spec)
    if spec.memory_term is not None:
        eff *= spec.memory_term.efficiency(layer, spec.byte_width)
    return op_count(layer) / (p * eff)


def standalone_seconds(layer: LayerSpec, spec: OracleSpec) -> float:
    """Noise-free roofline time of one unfused layer, without launch overhead."""
    d = data_volume(layer, spec.byte_width).total
    return max(compute_seconds(layer, spec), d / spec.peaks(layer.kind)[1])


def true_latency(layer: LayerSpec, spec: OracleSpec) -> float:
    """Noise-free execution time of an executed (possibly fused) layer.

    Fused operations add their standalone time to the anchor's compute
    term; the data term only counts the kernel's external tensors.
    """
    bare = layer.unfused()
    compute = compute_seconds(bare, spec) + sum(standalone_seconds(op, spec) for op in layer.fused_ops)
    vol = data_volume(bare, spec.byte_width)
    last = layer.fused_ops[-1] if layer.fused_ops else bare
    d = vol.bytes_in + vol.bytes_weights + data_volume(last, spec.byte_width).bytes_out
    b = spec.peaks(bare.kind)[1]
    return max(compute, d / b) + spec.overhead_sec


def _noise(rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
    """n draws of N(0, sigma^2) truncated to eps > -0.5."""
    eps = rng.normal(0.0, sigma, n) if sigma > 0 else np.zeros(n)
    bad = eps <= -0.5
    while bad.any():
        eps[bad] = rng.normal(0.0, sigma, int(bad.sum()))
        bad = eps <= -0.5
    return eps


def oracle_latency(layer: LayerSpec, spec: OracleSpec, rng_seed=0) -> float:
    """One noisy timing of ``layer`` on the oracle device."""
    rng = np.random.default_rng(rng_seed)
    return true_latency(layer, spec) * (1.0 + float(_noise(rng, spec.noise_rel_sigma, 1)[0]))


@dataclass(frozen=True)
class Measurement:
    layer: LayerSpec
    fused_flags: dict
    time_sec: float

    @property
    def name(self) -> str:
        return self.layer.name


class Device(Protocol):
    """Anything that can execute a graph and report per-layer times."""

    def profile(self, graph: NetworkGraph, n_iter: int = 20, seed: int = 0) -> list[Measurement]:
        ...


def profile_network(graph: NetworkGraph, spec: OracleSpec, n_iter: int = 20, rng_seed: int = 0) -> list[Measurement]:
    executed = fuse_graph(graph, spec.decide, allow_multi_input=True)
    pos = {layer.name: i for i, layer in enumerate(graph.layers)}

    # possibly-fused: multi-input followers are ambiguous to any observer
    possibly: dict[str, set] = {}
    owner = {}
    for layer in graph.topological_order():
        o = next((e.name for e in executed if e.name == layer.name or
                  any(op.name == layer.name for op in e.fused_ops)), None)
        owner[layer.name] = o
        if o != layer.name and len(graph.producers(layer.name)) > 1:
            for cand in fusion_candidates(graph, owner, layer.name):
                if executed[cand].kind in ANCHOR_KINDS:
                    possibly.setdefault(cand, set()).add(layer.kind.value)

    out = []
    for layer in executed.topological_order():
        if layer.kind is K.DATA_INPUT:
            continue
        flags = {}
        for op in layer.fused_ops:
            flags[op.kind.value] = POSSIBLY_FUSED if op.kind.value in possibly.get(layer.name, ()) else FUSED
        for kind in possibly.get(layer.name, ()):
            flags[kind] = POSSIBLY_FUSED
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, pos[layer.name]]))
        base = true_latency(layer, spec)
        t = base * (1.0 + float(_noise(rng, spec.noise_rel_sigma, n_iter).mean()))
        out.append(Measurement(layer, flags, t))
    return out


class OracleDevice:
    """Device adapter around an OracleSpec."""

    def __init__(self, spec: OracleSpec):
        self.spec = spec

    def profile(self, graph: NetworkGraph, n_iter: int = 20, seed: int = 0) -> list[Measurement]:
        return profile_network(graph, self.spec, n_iter, seed)


def oracle_to_dict(spec: OracleSpec) -> dict:
    d = asdict(spec)
    d["fusion_rules"] = [
        {"anchor": r.anchor, "follower": r.follower, "conditions": [list(c) for c in r.conditions]}
        for r in spec.fusion_rules
    ]
    d["kind_peaks"] = {k: list(v) for k, v in spec.kind_peaks.items()}
    for key in ("s", "alpha", "axis_map", "unrolled_kinds"):
        d[key] = list(d[key])
    if spec.memory_term is not None:
        d["memory_term"]["kinds"] = list(spec.memory_term.kinds)
    return {"format": "oracle-spec", "version": 1, **d}


def oracle_from_dict(doc: dict) -> OracleSpec:
    doc = dict(doc)
    if doc.pop("format", "oracle-spec") != "oracle-spec":
        raise ValueError("not an oracle-spec document")
    version = doc.pop("version", 1)
    if version != 1:
        raise ValueError(f"unsupported oracle-spec version {version}")
    if doc.get("memory_term"):
        mt = dict(doc["memory_term"])
        mt["kinds"] = tuple(mt.get("kinds", ("Conv2D",)))
        doc["memory_term"] = MemoryTerm(**mt)
    if "unrolled_kinds" in doc:
        doc["unrolled_kinds"] = tuple(doc["unrolled_kinds"])
    return OracleSpec(**doc)


def save_oracle(spec: OracleSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(oracle_to_dict(spec), fh, indent=2)
        fh.write("\n")


def load_oracle(path) -> OracleSpec:
    with open(path) as fh:
        return oracle_from_dict(json.load(fh))
