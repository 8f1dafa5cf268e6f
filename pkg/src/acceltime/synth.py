"""Random shape-consistent networks for end-to-end checks.

``random_network`` mixes every supported layer kind; ``nas_network`` builds
NASBench-style cell stacks (stem, three stacks of cells, pooling between
stacks, global pooling and classifier), the kind of family a latency
estimator is asked to rank during architecture search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .graph import K, LayerSpec, NetworkGraph, make_layer


@dataclass
class _Builder:
    layers: list = field(default_factory=list)
    edges: list = field(default_factory=list)
    counter: int = 0

    def _name(self, prefix):
        self.counter += 1
        return f"{prefix}{self.counter}"

    def add(self, prefix, kind, inputs, **params) -> LayerSpec:
        layer = make_layer(self._name(prefix), kind, **params)
        self.layers.append(layer)
        self.edges.extend((i.name, layer.name) for i in inputs)
        return layer

    def graph(self) -> NetworkGraph:
        return NetworkGraph(tuple(self.layers), tuple(self.edges))


def _shape(layer: LayerSpec) -> tuple[int, int, int]:
    if layer.kind in (K.FULLY_CONNECTED, K.GLOBAL_AVG_POOL):
        return 1, 1, layer.out_channels
    return ceil(layer.height / layer.stride), ceil(layer.width / layer.stride), layer.out_channels


def conv_bn_relu(b: _Builder, x: LayerSpec, filters: int, k: int, stride: int = 1, bn: bool = True) -> LayerSpec:
    h, w, c = _shape(x)
    y = b.add("conv", K.CONV2D, [x], height=h, width=w, channels=c, filters=filters, kernel_h=k, kernel_w=k,
              stride=stride)
    oh, ow, oc = _shape(y)
    if bn:
        y = b.add("bn", K.BATCH_NORM, [y], height=oh, width=ow, channels=oc)
    return b.add("relu", K.ACTIVATION, [y], height=oh, width=ow, channels=oc)


def pool(b: _Builder, x: LayerSpec, kind=K.MAX_POOL, size: int = 2, stride: int = 2) -> LayerSpec:
    h, w, c = _shape(x)
    return b.add("pool", kind, [x], height=h, width=w, channels=c, kernel_h=size, kernel_w=size, stride=stride)


def random_network(seed: int, n_blocks: tuple = (3, 8), max_channels: int = 160) -> NetworkGraph:
    """A random DAG using every layer kind the estimator supports."""
    rng = np.random.default_rng(seed)
    b = _Builder()
    side = int(rng.choice([16, 24, 28, 32, 48, 56]))
    x = b.add("input", K.DATA_INPUT, [], height=side, width=side, channels=int(rng.choice([3, 8, 16])))

    def ch():
        return int(rng.integers(8, max_channels + 1))

    for _ in range(int(rng.integers(n_blocks[0], n_blocks[1] + 1))):
        h, w, c = _shape(x)
        op = rng.choice(["conv", "conv", "pool", "residual", "concat", "depthwise"])
        if op == "conv":
            x = conv_bn_relu(b, x, ch(), int(rng.choice([1, 3, 5])), int(rng.choice([1, 1, 2])) if h > 4 else 1,
                             bn=bool(rng.random() < 0.8))
        elif op == "pool" and h >= 4:
            kind = K.MAX_POOL if rng.random() < 0.6 else K.AVG_POOL
            x = pool(b, x, kind, int(rng.choice([2, 3])), 2)
        elif op == "residual":
            a = conv_bn_relu(b, x, c, 3)
            a = conv_bn_relu(b, a, c, 3)
            skip = x if x.kind is not K.DATA_INPUT else conv_bn_relu(b, x, c, 1)
            x = b.add("add", K.ELEMWISE_ADD, [a, skip], height=h, width=w, channels=c)
        elif op == "concat":
            f1, f2 = ch(), ch()
            a = conv_bn_relu(b, x, f1, 1)
            d = conv_bn_relu(b, x, f2, 3)
            x = b.add("concat", K.CONCAT, [a, d], height=h, width=w, channels=f1 + f2)
        elif op == "depthwise":
            y = b.add("dw", K.DEPTHWISE_CONV2D, [x], height=h, width=w, channels=c, kernel_h=3, kernel_w=3, stride=1)
            y = b.add("bn", K.BATCH_NORM, [y], height=h, width=w, channels=c)
            x = b.add("relu", K.ACTIVATION, [y], height=h, width=w, channels=c)
        else:
            x = conv_bn_relu(b, x, ch(), 3)
    if rng.random() < 0.7:
        h, w, c = _shape(x)
        x = b.add("gap", K.GLOBAL_AVG_POOL, [x], height=h, width=w, channels=c)
        b.add("fc", K.FULLY_CONNECTED, [x], neurons_in=c, neurons_out=int(rng.choice([10, 100, 1000])))
    return b.graph()


NAS_OPS = ("conv3x3", "conv1x1", "maxpool3x3")


def nas_cell(b: _Builder, x: LayerSpec, rng, filters: int, n_nodes: int = 4) -> LayerSpec:
    """Random cell: each node applies one op to a random earlier node; outputs are summed."""
    h, w, c = _shape(x)
    if c != filters:
        x = conv_bn_relu(b, x, filters, 1)
    nodes = [x]
    for _ in range(n_nodes):
        src = nodes[int(rng.integers(0, len(nodes)))]
        op = NAS_OPS[int(rng.integers(0, len(NAS_OPS)))]
        if op == "conv3x3":
            nodes.append(conv_bn_relu(b, src, filters, 3))
        elif op == "conv1x1":
            nodes.append(conv_bn_relu(b, src, filters, 1))
        else:
            nodes.append(pool(b, src, K.MAX_POOL, 3, 1))
    leaves = [n for n in nodes[1:] if not any(e[0] == n.name for e in b.edges)]
    if len(leaves) == 1:
        return leaves[0]
    return b.add("add", K.ELEMWISE_ADD, leaves, height=h, width=w, channels=filters)


def nas_network(seed: int, side: int = 32, stacks: int = 3, cells_per_stack: int = 3) -> NetworkGraph:
    rng = np.random.default_rng(seed)
    b = _Builder()
    x = b.add("input", K.DATA_INPUT, [], height=side, width=side, channels=3)
    filters = int(rng.choice([16, 24, 32, 48, 64, 96, 128]))
    x = conv_bn_relu(b, x, filters, 3)
    for s in range(stacks):
        if s > 0:
            x = pool(b, x, K.MAX_POOL, 2, 2)
            filters *= 2
        for _ in range(cells_per_stack):
            x = nas_cell(b, x, rng, filters)
    h, w, c = _shape(x)
    x = b.add("gap", K.GLOBAL_AVG_POOL, [x], height=h, width=w, channels=c)
    b.add("fc", K.FULLY_CONNECTED, [x], neurons_in=c, neurons_out=10)
    return b.graph()
