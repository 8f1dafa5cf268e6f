"""Network graph data model, layer accounting and structural fusion.

Graphs carry shapes only. Every layer is described by a frozen ``LayerSpec``;
``op_count`` and ``data_volume`` turn a spec into the arithmetic work and the
off-chip traffic that the latency models consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from math import ceil
from typing import Callable, Iterable, Iterator, Optional


class LayerKind(str, Enum):
    CONV2D = "Conv2D"
    DEPTHWISE_CONV2D = "DepthwiseConv2D"
    FULLY_CONNECTED = "FullyConnected"
    MAX_POOL = "MaxPool"
    AVG_POOL = "AvgPool"
    GLOBAL_AVG_POOL = "GlobalAvgPool"
    ELEMWISE_ADD = "ElemwiseAdd"
    CONCAT = "Concat"
    BATCH_NORM = "BatchNorm"
    ACTIVATION = "Activation"
    DATA_INPUT = "DataInput"


K = LayerKind

WINDOWED_KINDS = frozenset({K.CONV2D, K.DEPTHWISE_CONV2D, K.MAX_POOL, K.AVG_POOL})
POOL_KINDS = frozenset({K.MAX_POOL, K.AVG_POOL})
# kinds that can absorb following operations into a single executed kernel
ANCHOR_KINDS = frozenset({K.CONV2D, K.DEPTHWISE_CONV2D, K.FULLY_CONNECTED})
FOLLOWER_KINDS = (K.BATCH_NORM, K.ACTIVATION, K.MAX_POOL, K.AVG_POOL, K.ELEMWISE_ADD, K.CONCAT)
MULTI_INPUT_KINDS = frozenset({K.ELEMWISE_ADD, K.CONCAT})

BYTE_WIDTHS = (1, 2, 4)

# Normative per-kind document fields (besides name/kind).
_SHAPE = ("height", "width", "channels")
_WINDOW = ("kernel_h", "kernel_w", "stride")
_POOL_ATTRS = ("pool_h", "pool_w", "pool_stride", "pool_kind")
REQUIRED_FIELDS: dict[LayerKind, tuple[str, ...]] = {
    K.CONV2D: _SHAPE + ("filters",) + _WINDOW,
    K.DEPTHWISE_CONV2D: _SHAPE + _WINDOW,
    K.FULLY_CONNECTED: ("neurons_in", "neurons_out"),
    K.MAX_POOL: _SHAPE + _WINDOW,
    K.AVG_POOL: _SHAPE + _WINDOW,
    K.GLOBAL_AVG_POOL: _SHAPE,
    K.ELEMWISE_ADD: _SHAPE,
    K.CONCAT: _SHAPE,
    K.BATCH_NORM: _SHAPE,
    K.ACTIVATION: _SHAPE,
    K.DATA_INPUT: _SHAPE,
}
OPTIONAL_FIELDS: dict[LayerKind, tuple[str, ...]] = {
    K.CONV2D: _POOL_ATTRS,
    K.DEPTHWISE_CONV2D: ("filters",) + _POOL_ATTRS,
    K.FULLY_CONNECTED: (),
}


class GraphError(ValueError):
    """Invalid graph document or layer description."""

    def __init__(self, message: str, layer: Optional[str] = None, field: Optional[str] = None):
        where = ""
        if layer is not None:
            where = f"layer {layer!r}"
            if field is not None:
                where += f", field {field!r}"
            where += ": "
        super().__init__(where + message)
        self.layer = layer
        self.field = field


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: LayerKind
    height: int = 1
    width: int = 1
    channels: int = 1
    filters: int = 1
    kernel_h: int = 1
    kernel_w: int = 1
    stride: int = 1
    pool_h: Optional[int] = None
    pool_w: Optional[int] = None
    pool_stride: Optional[int] = None
    pool_kind: Optional[str] = None
    neurons_in: Optional[int] = None
    neurons_out: Optional[int] = None
    # operations executed inside this kernel after the layer itself (post-fusion graphs only)
    fused_ops: tuple["LayerSpec", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        for name in ("height", "width", "channels", "filters", "kernel_h", "kernel_w", "stride"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise GraphError(f"must be a positive integer, got {v!r}", self.name, name)
        for name in ("pool_h", "pool_w", "pool_stride", "neurons_in", "neurons_out"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, int) or isinstance(v, bool) or v < 1):
                raise GraphError(f"must be a positive integer, got {v!r}", self.name, name)
        if self.has_pool != (self.pool_kind is not None):
            raise GraphError("pool_h, pool_w, pool_stride and pool_kind go together", self.name, "pool_kind")
        if self.pool_kind is not None and self.pool_kind not in (K.MAX_POOL.value, K.AVG_POOL.value):
            raise GraphError(f"unknown pool kind {self.pool_kind!r}", self.name, "pool_kind")

    @property
    def has_pool(self) -> bool:
        return self.pool_h is not None and self.pool_w is not None and self.pool_stride is not None

    @property
    def stride_total(self) -> int:
        return self.stride * (self.pool_stride if self.has_pool else 1)

    @property
    def out_height(self) -> int:
        return ceil(self.height / self.stride_total)

    @property
    def out_width(self) -> int:
        return ceil(self.width / self.stride_total)

    @property
    def out_channels(self) -> int:
        if self.kind in (K.CONV2D, K.FULLY_CONNECTED):
            return self.filters
        return self.channels

    def unfused(self) -> "LayerSpec":
        """The bare layer, without pooling attributes or absorbed operations."""
        if not self.has_pool and not self.fused_ops:
            return self
        return replace(self, pool_h=None, pool_w=None, pool_stride=None, pool_kind=None, fused_ops=())


def make_layer(name: str, kind, **params) -> LayerSpec:
    """Build a LayerSpec, deriving the fields a kind fixes implicitly."""
    kind = LayerKind(kind)
    p = dict(params)
    if kind is K.FULLY_CONNECTED:
        p.setdefault("height", 1)
        p.setdefault("width", 1)
        p["channels"] = p["neurons_in"]
        p["filters"] = p["neurons_out"]
    elif kind is not K.CONV2D:
        p.setdefault("filters", p.get("channels", 1))
    return LayerSpec(name=name, kind=kind, **p)


@dataclass(frozen=True)
class FeatureVector:
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

    NAMES = ("h", "w", "c", "f", "k_h", "k_w", "stride", "num_ops", "num_in", "num_out", "num_weights")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, n) for n in self.NAMES)


@dataclass(frozen=True)
class DataVolume:
    bytes_in: int
    bytes_weights: int
    bytes_out: int

    @property
    def total(self) -> int:
        return self.bytes_in + self.bytes_weights + self.bytes_out


def _out_elements(layer: LayerSpec) -> int:
    """Output element count of the layer itself (fused pooling ignored)."""
    if layer.kind is K.FULLY_CONNECTED:
        return layer.filters
    if layer.kind is K.GLOBAL_AVG_POOL:
        return layer.channels
    oh, ow = ceil(layer.height / layer.stride), ceil(layer.width / layer.stride)
    return oh * ow * layer.out_channels


def weight_count(layer: LayerSpec) -> int:
    if layer.kind is K.CONV2D:
        return layer.kernel_h * layer.kernel_w * layer.channels * layer.filters
    if layer.kind is K.DEPTHWISE_CONV2D:
        return layer.kernel_h * layer.kernel_w * layer.channels
    if layer.kind is K.FULLY_CONNECTED:
        return layer.channels * layer.filters
    if layer.kind is K.BATCH_NORM:
        return 2 * layer.channels
    return 0


def op_count(layer: LayerSpec) -> int:
    """Arithmetic operations of one layer, counting a MAC as two ops."""
    kind = layer.kind
    oh, ow = ceil(layer.height / layer.stride), ceil(layer.width / layer.stride)
    if kind is K.CONV2D:
        return 2 * oh * ow * layer.channels * layer.filters * layer.kernel_h * layer.kernel_w
    if kind is K.DEPTHWISE_CONV2D:
        return 2 * oh * ow * layer.channels * layer.kernel_h * layer.kernel_w
    if kind is K.FULLY_CONNECTED:
        return 2 * layer.channels * layer.filters
    if kind in POOL_KINDS:
        return _out_elements(layer) * layer.kernel_h * layer.kernel_w
    if kind is K.GLOBAL_AVG_POOL:
        return layer.channels * layer.height * layer.width
    if kind is K.BATCH_NORM:
        return 2 * _out_elements(layer)
    # ElemwiseAdd, Activation, Concat, DataInput: one op per output element
    return _out_elements(layer)


def data_volume(layer: LayerSpec, byte_width: int) -> DataVolume:
    if byte_width not in BYTE_WIDTHS:
        raise ValueError(f"unsupported byte width {byte_width}; expected one of {BYTE_WIDTHS}")
    bytes_in = layer.height * layer.width * layer.channels * byte_width
    if layer.kind in (K.FULLY_CONNECTED, K.GLOBAL_AVG_POOL):
        out = layer.out_channels
    else:
        out = layer.out_height * layer.out_width * layer.out_channels
    return DataVolume(bytes_in, weight_count(layer) * byte_width, out * byte_width)


def layer_features(layer: LayerSpec, byte_width: int = 1) -> FeatureVector:
    # element counts are byte-width independent; the argument only validates precision
    vol = data_volume(layer, byte_width)
    return FeatureVector(
        h=layer.height,
        w=layer.width,
        c=layer.channels,
        f=layer.filters,
        k_h=layer.kernel_h,
        k_w=layer.kernel_w,
        stride=layer.stride,
        num_ops=op_count(layer),
        num_in=vol.bytes_in // byte_width,
        num_out=vol.bytes_out // byte_width,
        num_weights=vol.bytes_weights // byte_width,
    )


@dataclass(frozen=True)
class NetworkGraph:
    layers: tuple[LayerSpec, ...]
    edges: tuple[tuple[str, str], ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "edges", tuple((a, b) for a, b in self.edges))
        index = {}
        for layer in self.layers:
            if layer.name in index:
                raise GraphError("duplicate layer name", layer.name, "name")
            index[layer.name] = layer
        object.__setattr__(self, "_index", index)
        for a, b in self.edges:
            for end in (a, b):
                if end not in index:
                    raise GraphError(f"edge ({a!r}, {b!r}) references undeclared layer {end!r}", end)
        has_input = {b for _, b in self.edges}
        for layer in self.layers:
            if layer.kind is not K.DATA_INPUT and layer.name not in has_input and len(self.layers) > 1:
                raise GraphError("layer has no incoming edge", layer.name)
        self.topological_order()  # raises on cycles

    def __getitem__(self, name: str) -> LayerSpec:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.layers)

    def __iter__(self) -> Iterator[LayerSpec]:
        return iter(self.layers)

    def producers(self, name: str) -> list[str]:
        return [a for a, b in self.edges if b == name]

    def consumers(self, name: str) -> list[str]:
        return [b for a, b in self.edges if a == name]

    def topological_order(self) -> list[LayerSpec]:
        """Kahn's algorithm; ties resolved by declaration order."""
        pos = {layer.name: i for i, layer in enumerate(self.layers)}
        indeg = {layer.name: 0 for layer in self.layers}
        succ: dict[str, list[str]] = {layer.name: [] for layer in self.layers}
        for a, b in self.edges:
            indeg[b] += 1
            succ[a].append(b)
        ready = sorted((n for n, d in indeg.items() if d == 0), key=pos.__getitem__)
        order = []
        while ready:
            n = ready.pop(0)
            order.append(self._index[n])
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    ready.append(m)
            ready.sort(key=pos.__getitem__)
        if len(order) != len(self.layers):
            stuck = sorted((n for n, d in indeg.items() if d > 0), key=pos.__getitem__)
            raise GraphError(f"cycle detected through {stuck}", stuck[0])
        return order


# ---------------------------------------------------------------------------
# document format

def layer_to_record(layer: LayerSpec) -> dict:
    rec = {"name": layer.name, "kind": layer.kind.value}
    for key in REQUIRED_FIELDS[layer.kind]:
        rec[key] = getattr(layer, key)
    for key in OPTIONAL_FIELDS.get(layer.kind, ()):
        v = getattr(layer, key)
        if v is not None and not (key == "filters" and v == layer.channels):
            rec[key] = v
    if layer.fused_ops:
        rec["fused"] = [layer_to_record(op) for op in layer.fused_ops]
    return rec


def layer_from_record(rec) -> LayerSpec:
    if not isinstance(rec, dict):
        raise GraphError(f"layer entry must be an object, got {type(rec).__name__}")
    name = rec.get("name")
    if not isinstance(name, str) or not name:
        raise GraphError("layer without a valid 'name'", None)
    try:
        kind = LayerKind(rec.get("kind"))
    except ValueError:
        raise GraphError(f"unknown kind {rec.get('kind')!r}", name, "kind") from None
    required = REQUIRED_FIELDS[kind]
    allowed = set(required) | set(OPTIONAL_FIELDS.get(kind, ())) | {"name", "kind", "fused"}
    for key in rec:
        if key not in allowed:
            raise GraphError(f"field not allowed for {kind.value}", name, key)
    for key in required:
        if key not in rec:
            raise GraphError(f"missing field required by {kind.value}", name, key)
        v = rec[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise GraphError(f"must be a positive integer, got {v!r}", name, key)
    params = {k: rec[k] for k in rec if k not in ("name", "kind", "fused")}
    if kind is K.DEPTHWISE_CONV2D and params.get("filters", rec["channels"]) != rec["channels"]:
        raise GraphError("depthwise filters must equal channels", name, "filters")
    fused = tuple(layer_from_record(r) for r in rec.get("fused", ()))
    return make_layer(name, kind, fused_ops=fused, **params)


def graph_to_dict(graph: NetworkGraph) -> dict:
    return {
        "layers": [layer_to_record(layer) for layer in graph.layers],
        "edges": [[a, b] for a, b in graph.edges],
    }


def serialize_graph(graph: NetworkGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2)


def graph_from_dict(doc) -> NetworkGraph:
    if not isinstance(doc, dict) or "layers" not in doc:
        raise GraphError("document must be an object with a 'layers' list")
    unknown = set(doc) - {"layers", "edges"}
    if unknown:
        raise GraphError(f"unknown top-level fields {sorted(unknown)}")
    if not isinstance(doc["layers"], list):
        raise GraphError("'layers' must be a list")
    layers = [layer_from_record(r) for r in doc["layers"]]
    edges = []
    for e in doc.get("edges", []):
        if not (isinstance(e, (list, tuple)) and len(e) == 2 and all(isinstance(x, str) for x in e)):
            raise GraphError(f"edge must be a [from, to] pair of names, got {e!r}")
        edges.append((e[0], e[1]))
    return NetworkGraph(tuple(layers), tuple(edges))


def parse_graph(document: str) -> NetworkGraph:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed document: {exc}") from None
    return graph_from_dict(doc)


def load_graph(path) -> NetworkGraph:
    with open(path) as fh:
        return parse_graph(fh.read())


def save_graph(graph: NetworkGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_graph(graph) + "\n")


# ---------------------------------------------------------------------------
# structural fusion shared by the oracle and the estimator

FusionDecision = Callable[[LayerSpec, LayerSpec], bool]


def absorb(anchor: LayerSpec, follower: LayerSpec) -> LayerSpec:
    """Return the anchor with ``follower`` executed inside it."""
    extra = {}
    if follower.kind in POOL_KINDS:
        extra = dict(
            pool_h=follower.kernel_h,
            pool_w=follower.kernel_w,
            pool_stride=follower.stride,
            pool_kind=follower.kind.value,
        )
    return replace(anchor, fused_ops=anchor.fused_ops + (follower.unfused(),), **extra)


def can_follow(anchor: LayerSpec, follower: LayerSpec) -> bool:
    """Structural admissibility of a fusion, independent of any learned rule."""
    if anchor.kind not in ANCHOR_KINDS or follower.kind not in FOLLOWER_KINDS:
        return False
    if follower.fused_ops or follower.has_pool:
        return False
    if follower.kind in POOL_KINDS and anchor.has_pool:
        return False
    return True


def fusion_candidates(graph: NetworkGraph, owner: dict, name: str) -> list[str]:
    """Anchors (by owner name) that could absorb layer ``name``.

    A producer only qualifies when ``name`` is its single consumer, so the
    intermediate tensor is not needed anywhere else.
    """
    out = []
    for p in graph.producers(name):
        o = owner.get(p)
        if o is None or len(graph.consumers(p)) != 1:
            continue
        if o not in out:
            out.append(o)
    return out


def fuse_graph(graph: NetworkGraph, decide: FusionDecision, allow_multi_input: bool = False) -> NetworkGraph:
    """Greedy single forward pass of layer fusion.

    Layers are visited in topological order; a follower is absorbed into the
    anchor that owns its producer when ``decide`` agrees. Followers with
    several producers are absorbed only with ``allow_multi_input`` (into the
    first accepting anchor).
    """
    order = graph.topological_order()
    state: dict[str, LayerSpec] = {}
    owner: dict[str, str] = {}
    for layer in order:
        target = None
        if layer.kind is not K.DATA_INPUT:
            cands = fusion_candidates(graph, owner, layer.name)
            nprod = len(graph.producers(layer.name))
            if cands and (nprod == 1 or allow_multi_input):
                for o in cands:
                    anchor = state[o]
                    if can_follow(anchor, layer) and decide(anchor, layer):
                        target = o
                        break
        if target is None:
            state[layer.name] = layer
            owner[layer.name] = layer.name
        else:
            state[target] = absorb(state[target], layer)
            owner[layer.name] = target
    layers = [state[x.name] for x in order if owner[x.name] == x.name]
    # keep declaration order for the surviving layers
    pos = {x.name: i for i, x in enumerate(graph.layers)}
    layers.sort(key=lambda x: pos[x.name])
    edges = []
    for a, b in graph.edges:
        e = (owner[a], owner[b])
        if e[0] != e[1] and e not in edges:
            edges.append(e)
    return NetworkGraph(tuple(layers), tuple(edges))


def chain(layers: Iterable[LayerSpec]) -> NetworkGraph:
    """Linear graph through ``layers`` in the given order."""
    layers = tuple(layers)
    edges = tuple((a.name, b.name) for a, b in zip(layers, layers[1:]))
    return NetworkGraph(layers, edges)


def spec_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(LayerSpec) if f.name != "fused_ops")


def output_shape(layer: LayerSpec) -> tuple[int, int, int]:
    """(height, width, channels) of the tensor a layer produces."""
    if layer.kind in (K.FULLY_CONNECTED, K.GLOBAL_AVG_POOL):
        return 1, 1, layer.out_channels
    return layer.out_height, layer.out_width, layer.out_channels
