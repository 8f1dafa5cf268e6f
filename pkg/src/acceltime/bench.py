"""Benchmark configuration sweeps, benchmark graphs, runner and graph matcher.

A configuration table is a list of flat dict rows (one per benchmark graph).
``run_benchmark`` builds each graph, profiles it on a device, and matches the
executed layers back to the original graph. The matcher yields one
``LayerRecord`` per executed layer plus ``FusionEvent`` rows describing every
adjacent anchor/follower pair; both persist as CSV tables.
"""

from __future__ import annotations

import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from math import ceil
from typing import Optional, Sequence

import numpy as np

from .graph import (
    ANCHOR_KINDS,
    FOLLOWER_KINDS,
    FeatureVector,
    K,
    LayerKind,
    LayerSpec,
    NetworkGraph,
    absorb,
    can_follow,
    layer_features,
    make_layer,
)
from .oracle import FUSED, NOT_FUSED, POSSIBLY_FUSED, Device, Measurement

log = logging.getLogger(__name__)

MODES = ("full-grid", "axis-sweep", "efficiency-surface", "noisy-surface")
GRAPH_KINDS = ("micro-kernel", "convnet", "fcnet")
PARAM_KEYS = ("h", "w", "c", "f", "k_h", "k_w", "stride", "neurons_in", "neurons_out",
              "pool_size", "pool_stride", "pool_kind")
CONFIG_COLUMNS = ("index", "graph", "kind", "mode") + PARAM_KEYS


def _pow2_neighbours(lo: int, hi: int) -> tuple[int, ...]:
    vals = set()
    p = 1
    while p <= hi:
        for v in (p - 1, p, p + 1):
            if lo <= v <= hi:
                vals.add(v)
        p *= 2
    return tuple(sorted(vals))


# values in 8..2048: powers of two and their +-1 neighbours to probe efficiency cliffs
DEFAULT_DIMS = _pow2_neighbours(8, 2048)
DEFAULT_KERNELS = (1, 3, 5, 7)
DEFAULT_POOLS = tuple(range(2, 11))


class SweepError(ValueError):
    pass


@dataclass
class SweepSpec:
    layer_kind: str
    ranges: dict
    mode: str = "full-grid"
    graph: str = "micro-kernel"
    # (s, axis_map) of the fitted unrolling; required by the surface modes
    unrolling: Optional[tuple] = None
    axes: Optional[tuple] = None  # axis-sweep axes; default: every range with >1 value
    pin_levels: tuple = (0.0, 0.5, 1.0)
    noise_scale: float = 0.5  # noisy-surface: sigma in units of s_i
    max_configs: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise SweepError(f"unknown sweep mode {self.mode!r}")
        if self.graph not in GRAPH_KINDS:
            raise SweepError(f"unknown benchmark graph {self.graph!r}")
        LayerKind(self.layer_kind)
        ranges = {}
        for key, vals in self.ranges.items():
            vals = tuple(vals)
            if not vals:
                raise SweepError(f"empty range for {key!r}")
            if key == "k":
                ranges["k_h"] = ranges["k_w"] = vals
            elif key in PARAM_KEYS:
                ranges[key] = vals
            else:
                raise SweepError(f"unknown sweep parameter {key!r}")
        self.ranges = ranges


def default_sweep(kind: str, mode: str = "full-grid", **kw) -> SweepSpec:
    """Parameter ranges used for micro-kernel sweeps of ``kind``."""
    kind = LayerKind(kind)
    dims = DEFAULT_DIMS
    if kind is K.CONV2D:
        ranges = dict(h=dims, w=dims, c=dims, f=dims, k=DEFAULT_KERNELS, stride=(1,))
    elif kind is K.DEPTHWISE_CONV2D:
        ranges = dict(h=dims, w=dims, c=dims, k=DEFAULT_KERNELS, stride=(1, 2))
    elif kind in (K.MAX_POOL, K.AVG_POOL):
        ranges = dict(h=dims, w=dims, c=dims, k=DEFAULT_POOLS, stride=(1, 2))
    elif kind is K.FULLY_CONNECTED:
        ranges = dict(neurons_in=dims, neurons_out=dims)
    else:
        ranges = dict(h=dims, w=dims, c=dims)
    return SweepSpec(kind.value, ranges, mode, **kw)


_AXIS_KEYS = {"h": "h", "w": "w", "c": "c", "f": "f"}


def _grid(ranges: dict) -> list[dict]:
    keys = list(ranges)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(ranges[k] for k in keys))]


def _on_surface(cfg: dict, s, axis_map) -> bool:
    for si, axis in zip(s, axis_map):
        v = cfg.get(_AXIS_KEYS[axis])
        if si > 1 and v is not None and v % si:
            return False
    return True


def generate_configs(spec: SweepSpec) -> list[dict]:
    """Expand a sweep into configuration rows (without index/graph columns)."""
    mode = spec.mode
    if mode == "full-grid":
        rows = _grid(spec.ranges)
    elif mode == "axis-sweep":
        axes = spec.axes or tuple(k for k, v in spec.ranges.items() if len(v) > 1)
        rows, seen = [], set()
        for axis in axes:
            if axis not in spec.ranges:
                raise SweepError(f"axis {axis!r} has no range")
            for q in spec.pin_levels:
                pins = {k: v[int(round(q * (len(v) - 1)))] for k, v in spec.ranges.items() if k != axis}
                for val in spec.ranges[axis]:
                    cfg = dict(pins, **{axis: val})
                    if axis in ("k_h", "k_w") and "k_h" in spec.ranges and "k_w" in spec.ranges \
                            and spec.ranges["k_h"] == spec.ranges["k_w"]:
                        cfg["k_h"] = cfg["k_w"] = val
                    key = tuple(sorted(cfg.items()))
                    if key not in seen:
                        seen.add(key)
                        rows.append(cfg)
    else:
        if spec.unrolling is None:
            raise SweepError(f"{mode} requires a fitted unrolling vector")
        s, axis_map = spec.unrolling
        rows = [cfg for cfg in _grid(spec.ranges) if _on_surface(cfg, s, axis_map)]
        if mode == "noisy-surface":
            rng = np.random.default_rng(spec.seed)
            noisy = []
            for cfg in rows:
                cfg = dict(cfg)
                for si, axis in zip(s, axis_map):
                    key = _AXIS_KEYS[axis]
                    if si > 1 and key in cfg:
                        cfg[key] = max(1, int(cfg[key] + round(rng.normal(0.0, spec.noise_scale * si))))
                noisy.append(cfg)
            rows = noisy
    if spec.max_configs is not None and len(rows) > spec.max_configs:
        rng = np.random.default_rng(spec.seed)
        keep = np.sort(rng.choice(len(rows), spec.max_configs, replace=False))
        rows = [rows[i] for i in keep]
    return [dict(cfg, kind=spec.layer_kind, graph=spec.graph, mode=mode) for cfg in rows]


def index_table(rows: Sequence[dict]) -> list[dict]:
    return [dict(row, index=i) for i, row in enumerate(rows)]


def save_table(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CONFIG_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in CONFIG_COLUMNS})


def load_table(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CONFIG_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise SweepError(f"configuration table lacks columns {sorted(missing)}")
        for raw in reader:
            row = {}
            for k, v in raw.items():
                if v == "" or v is None:
                    continue
                row[k] = v if k in ("graph", "kind", "mode", "pool_kind") else int(v)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# benchmark graphs

def _layer_from_config(name: str, kind: LayerKind, cfg: dict) -> LayerSpec:
    if kind is K.FULLY_CONNECTED:
        return make_layer(name, kind, neurons_in=cfg["neurons_in"], neurons_out=cfg["neurons_out"])
    p = dict(height=cfg["h"], width=cfg.get("w", cfg["h"]), channels=cfg["c"])
    if kind is K.CONV2D:
        p["filters"] = cfg["f"]
    if kind in (K.CONV2D, K.DEPTHWISE_CONV2D, K.MAX_POOL, K.AVG_POOL):
        p.update(kernel_h=cfg.get("k_h", 1), kernel_w=cfg.get("k_w", cfg.get("k_h", 1)), stride=cfg.get("stride", 1))
    return make_layer(name, kind, **p)


def build_benchmark_graph(kind: str, config: dict) -> NetworkGraph:
    """Dummy network for one configuration row.

    ``micro-kernel``: input followed by one layer of ``config['kind']``; a
    DataInput producer is never an anchor, so nothing can fuse.
    ``convnet``: conv/BN/ReLU blocks around a pooling layer and a residual add.
    ``fcnet``: conv/BN/ReLU, global average pooling, fully connected tail.
    """
    if kind == "micro-kernel":
        lk = LayerKind(config["kind"])
        layer = _layer_from_config(lk.value.lower(), lk, config)
        src = make_layer("input", K.DATA_INPUT, height=layer.height, width=layer.width, channels=layer.channels)
        return NetworkGraph((src, layer), (("input", layer.name),))
    h, w, c, f = config["h"], config.get("w", config["h"]), config["c"], config["f"]
    kh = config.get("k_h", 3)
    kw = config.get("k_w", kh)
    L = []

    def add(name, kind, **p):
        L.append(make_layer(name, kind, **p))

    def conv_block(i, hh, ww, cin, cout, k1, k2):
        add(f"conv{i}", K.CONV2D, height=hh, width=ww, channels=cin, filters=cout, kernel_h=k1, kernel_w=k2, stride=1)
        add(f"bn{i}", K.BATCH_NORM, height=hh, width=ww, channels=cout)
        add(f"relu{i}", K.ACTIVATION, height=hh, width=ww, channels=cout)
        return [(f"conv{i}", f"bn{i}"), (f"bn{i}", f"relu{i}")]

    add("input", K.DATA_INPUT, height=h, width=w, channels=c)
    edges = [("input", "conv1")] + conv_block(1, h, w, c, f, kh, kw)
    if kind == "convnet":
        pk = LayerKind(config.get("pool_kind", "MaxPool"))
        ps = config.get("pool_size", 2)
        pst = config.get("pool_stride", ps)
        add("pool1", pk, height=h, width=w, channels=f, kernel_h=ps, kernel_w=ps, stride=pst)
        h2, w2 = ceil(h / pst), ceil(w / pst)
        edges += [("relu1", "pool1"), ("pool1", "conv2"), ("pool1", "conv3")]
        edges += conv_block(2, h2, w2, f, f, kh, kw)
        edges += conv_block(3, h2, w2, f, f, 1, 1)
        add("add1", K.ELEMWISE_ADD, height=h2, width=w2, channels=f)
        edges += [("relu2", "add1"), ("relu3", "add1")]
    elif kind == "fcnet":
        add("gap", K.GLOBAL_AVG_POOL, height=h, width=w, channels=f)
        add("fc", K.FULLY_CONNECTED, neurons_in=f, neurons_out=config.get("neurons_out", 1000))
        edges += [("relu1", "gap"), ("gap", "fc")]
    else:
        raise SweepError(f"unknown benchmark graph {kind!r}")
    return NetworkGraph(tuple(L), tuple(edges))


# ---------------------------------------------------------------------------
# records and matching

SPEC_COLUMNS = ("kind", "h", "w", "c", "f", "k_h", "k_w", "stride", "pool_h", "pool_w", "pool_stride",
                "pool_kind", "neurons_in", "neurons_out")
FLAG_COLUMNS = tuple(f"flag_{k.value}" for k in FOLLOWER_KINDS)
RECORD_COLUMNS = (("config_index", "graph", "mode", "name") + SPEC_COLUMNS + FeatureVector.NAMES[7:]
                  + FLAG_COLUMNS + ("time_sec",))


class MatchError(ValueError):
    pass


def _spec_row(layer: LayerSpec) -> dict:
    return {
        "kind": layer.kind.value, "h": layer.height, "w": layer.width, "c": layer.channels,
        "f": layer.filters, "k_h": layer.kernel_h, "k_w": layer.kernel_w, "stride": layer.stride,
        "pool_h": layer.pool_h, "pool_w": layer.pool_w, "pool_stride": layer.pool_stride,
        "pool_kind": layer.pool_kind, "neurons_in": layer.neurons_in, "neurons_out": layer.neurons_out,
    }


def _spec_from_row(name: str, row: dict) -> LayerSpec:
    kind = LayerKind(row["kind"])
    opt = {k: row.get(k) for k in ("pool_h", "pool_w", "pool_stride", "pool_kind")}
    if kind is K.FULLY_CONNECTED:
        return make_layer(name, kind, neurons_in=row["neurons_in"], neurons_out=row["neurons_out"],
                          height=row.get("h", 1), width=row.get("w", 1))
    return LayerSpec(name, kind, row["h"], row["w"], row["c"], row["f"], row["k_h"], row["k_w"],
                     row["stride"], **opt)


@dataclass
class LayerRecord:
    """One executed layer with its parameters, fused flags and mean time."""

    name: str
    kind: str
    h: int
    w: int
    c: int
    f: int
    k_h: int
    k_w: int
    stride: int
    num_ops: int
    num_in: int
    num_out: int
    num_weights: int
    time_sec: float
    flags: dict = field(default_factory=dict)
    pool_h: Optional[int] = None
    pool_w: Optional[int] = None
    pool_stride: Optional[int] = None
    pool_kind: Optional[str] = None
    neurons_in: Optional[int] = None
    neurons_out: Optional[int] = None
    config_index: int = -1
    graph: str = ""
    mode: str = ""

    @classmethod
    def from_layer(cls, layer: LayerSpec, time_sec: float, flags=None, **meta) -> "LayerRecord":
        fv = layer_features(layer)
        row = _spec_row(layer)
        return cls(name=layer.name, time_sec=float(time_sec), flags=dict(flags or {}),
                   num_ops=fv.num_ops, num_in=fv.num_in, num_out=fv.num_out, num_weights=fv.num_weights,
                   **row, **meta)

    def spec(self) -> LayerSpec:
        return _spec_from_row(self.name, self.__dict__)

    @property
    def features(self) -> FeatureVector:
        return FeatureVector(*(getattr(self, n) for n in FeatureVector.NAMES))

    @property
    def unfused(self) -> bool:
        return not any(v in (FUSED, POSSIBLY_FUSED) for v in self.flags.values())

    def to_row(self) -> dict:
        row = {k: getattr(self, k) for k in RECORD_COLUMNS if not k.startswith("flag_")}
        for k in FOLLOWER_KINDS:
            row[f"flag_{k.value}"] = self.flags.get(k.value)
        return row

    @classmethod
    def from_row(cls, row: dict) -> "LayerRecord":
        flags = {k[5:]: row[k] for k in FLAG_COLUMNS if row.get(k)}
        kw = {k: row.get(k) for k in (f.name for f in fields(cls)) if k != "flags"}
        return cls(flags=flags, **kw)


@dataclass
class FusionEvent:
    """An adjacent (anchor, follower) pair and what the toolchain did with it.

    ``anchor`` is the anchor as it stood when the follower was considered
    (earlier absorbed pooling already attached).
    """

    anchor: LayerSpec
    follower: LayerSpec
    state: str
    multi_input: bool = False
    config_index: int = -1

    @property
    def pair(self) -> tuple[str, str]:
        return self.anchor.kind.value, self.follower.kind.value


EVENT_COLUMNS = (("config_index", "state", "multi_input", "anchor_name", "follower_name")
                 + tuple("anchor_" + c for c in SPEC_COLUMNS) + tuple("follower_" + c for c in SPEC_COLUMNS))


def _event_row(ev: FusionEvent) -> dict:
    row = {"config_index": ev.config_index, "state": ev.state, "multi_input": int(ev.multi_input),
           "anchor_name": ev.anchor.name, "follower_name": ev.follower.name}
    row.update({"anchor_" + k: v for k, v in _spec_row(ev.anchor).items()})
    row.update({"follower_" + k: v for k, v in _spec_row(ev.follower).items()})
    return row


def _event_from_row(row: dict) -> FusionEvent:
    a = {k[7:]: v for k, v in row.items() if k.startswith("anchor_") and k != "anchor_name"}
    f = {k[9:]: v for k, v in row.items() if k.startswith("follower_") and k != "follower_name"}
    return FusionEvent(_spec_from_row(row["anchor_name"], a), _spec_from_row(row["follower_name"], f),
                       row["state"], bool(row["multi_input"]), row["config_index"])


@dataclass
class MappingSummary:
    """Optimization mapping of one benchmark graph."""

    owner: dict  # original layer name -> executed layer name
    events: list
    n_original: int
    n_executed: int


def _match_name(executed: str, original: NetworkGraph) -> str:
    if executed in original:
        return executed
    best = None
    for layer in original:
        if executed.startswith(layer.name) and (best is None or len(layer.name) > len(best)):
            best = layer.name
    if best is None:
        raise MatchError(f"executed layer {executed!r} matches no original layer")
    return best


def _event_anchor(layer: LayerSpec) -> LayerSpec:
    # pooling attributes shape the features; the absorbed-op list does not
    return replace(layer, fused_ops=())


def match_graphs(original: NetworkGraph, measurements: Sequence[Measurement], **meta
                 ) -> tuple[list[LayerRecord], MappingSummary]:
    """Attribute missing original layers to executed anchors and set fused flags."""
    times = {}
    for m in measurements:
        times[_match_name(m.name, original)] = m.time_sec
    owner: dict[str, str] = {}
    state: dict[str, LayerSpec] = {}
    flags: dict[str, dict] = {n: {} for n in times}
    events = []
    cfg_index = meta.get("config_index", -1)

    def set_flag(anchor, kind, value):
        rank = {NOT_FUSED: 0, POSSIBLY_FUSED: 1, FUSED: 2}
        cur = flags[anchor].get(kind)
        if cur is None or rank[value] > rank[cur]:
            flags[anchor][kind] = value

    for layer in original.topological_order():
        name = layer.name
        if layer.kind is K.DATA_INPUT:
            owner[name] = name
            continue
        prods = original.producers(name)
        # anchors whose output this layer could have been fused onto
        adjacent = []
        for p in prods:
            o = owner.get(p)
            if o in times and o not in adjacent and state[o].kind in ANCHOR_KINDS \
                    and len(original.consumers(p)) == 1 and can_follow(state[o], layer):
                adjacent.append(o)
        multi = len(prods) > 1
        if name in times:
            owner[name] = name
            state[name] = layer
            for o in adjacent:
                set_flag(o, layer.kind.value, NOT_FUSED)
                events.append(FusionEvent(_event_anchor(state[o]), layer, NOT_FUSED, multi, cfg_index))
            continue
        cands = []
        for p in prods:
            o = owner.get(p)
            if o in times and o not in cands:
                cands.append(o)
        if not cands:
            raise MatchError(f"layer {name!r} was not executed and has no executed producer")
        if len(cands) == 1:
            o = cands[0]
            if o in adjacent:
                events.append(FusionEvent(_event_anchor(state[o]), layer, FUSED, multi, cfg_index))
            state[o] = absorb(state[o], layer)
            set_flag(o, layer.kind.value, FUSED)
        else:
            for o in cands:
                set_flag(o, layer.kind.value, POSSIBLY_FUSED)
                if o in adjacent:
                    events.append(FusionEvent(_event_anchor(state[o]), layer, POSSIBLY_FUSED, multi, cfg_index))
        owner[name] = cands[0]

    records = []
    for layer in original.topological_order():
        if layer.name in times:
            records.append(LayerRecord.from_layer(state[layer.name], times[layer.name], flags[layer.name], **meta))
    return records, MappingSummary(owner, events, len(original), len(records))


@dataclass
class BenchmarkRun:
    records: list
    events: list
    failures: list  # (config index, message)


def run_benchmark(table: Sequence[dict], device: Device, n_iter: int = 20, seed: int = 0,
                  workers: int = 1) -> BenchmarkRun:
    """Profile every configuration; failing configurations are logged and skipped."""
    rows = [row if "index" in row else dict(row, index=i) for i, row in enumerate(table)]

    def one(row):
        graph = build_benchmark_graph(row["graph"], row)
        s = int(np.random.SeedSequence([seed, int(row["index"])]).generate_state(1)[0])
        meas = device.profile(graph, n_iter, s)
        return match_graphs(graph, meas, config_index=int(row["index"]), graph=row["graph"],
                            mode=row.get("mode", ""))

    results = {}

    def guarded(row):
        try:
            return row["index"], one(row), None
        except Exception as exc:  # one bad configuration must not end the sweep
            return row["index"], None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(guarded, rows))
    else:
        outcomes = [guarded(r) for r in rows]
    failures = []
    for idx, res, err in sorted(outcomes, key=lambda o: o[0]):
        if err is not None:
            log.warning("config %s failed: %s", idx, err)
            failures.append((idx, err))
        else:
            results[idx] = res
    records, events = [], []
    for idx in sorted(results):
        recs, summary = results[idx]
        records.extend(recs)
        events.extend(summary.events)
    return BenchmarkRun(records, events, failures)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


_TEXT = {"name", "kind", "graph", "mode", "pool_kind", "state", "anchor_name", "follower_name",
         "anchor_kind", "follower_kind", "anchor_pool_kind", "follower_pool_kind"}


def _read_csv(path, columns):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []  # zero-byte file: an empty table
        missing = set(columns) - set(reader.fieldnames)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for raw in reader:
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in _TEXT or k.startswith("flag_"):
                    row[k] = v
                elif k == "time_sec":
                    row[k] = float(v)
                else:
                    row[k] = int(v)
            out.append(row)
        return out


def save_records(records: Sequence[LayerRecord], path) -> None:
    _write_csv(path, RECORD_COLUMNS, [r.to_row() for r in records])


def load_records(path) -> list[LayerRecord]:
    return [LayerRecord.from_row(r) for r in _read_csv(path, RECORD_COLUMNS)]


def save_events(events: Sequence[FusionEvent], path) -> None:
    _write_csv(path, EVENT_COLUMNS, [_event_row(e) for e in events])


def load_events(path) -> list[FusionEvent]:
    return [_event_from_row(r) for r in _read_csv(path, EVENT_COLUMNS)]
