"""Network-level latency estimation with a PlatformModel."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .graph import K, LayerSpec, NetworkGraph, data_volume, fuse_graph, graph_to_dict, op_count
from .models import FAMILIES, SIMPLE_KINDS, LayerEstimate, PlatformModel, fuse_adjust

FALLBACK = "fallback-roofline"


@dataclass(frozen=True)
class EstimationReport:
    total_sec: float
    layers: tuple
    execution_graph: NetworkGraph
    family: str
    fallback_count: int

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "total_sec": self.total_sec,
            "fallback_count": self.fallback_count,
            "layers": [e.to_row() for e in self.layers],
            "execution_graph": graph_to_dict(self.execution_graph),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        head = f"{'layer':<24}{'kind':<16}{'model':<20}{'t_hat [ms]':>12}{'u_eff':>8}{'u_stat':>8}" \
               f"{'P_eff [GOP/s]':>15}  regime"
        lines = [head, "-" * len(head)]
        for e in self.layers:
            lines.append(f"{e.name:<24}{e.kind:<16}{e.model_used:<20}{e.t_hat * 1e3:>12.4f}{e.u_eff:>8.3f}"
                         f"{e.u_stat:>8.3f}{e.p_eff / 1e9:>15.2f}  {e.regime}")
        lines.append("-" * len(head))
        lines.append(f"total ({self.family}): {self.total_sec * 1e3:.4f} ms, {len(self.layers)} executed layers, "
                     f"{self.fallback_count} fallbacks")
        return "\n".join(lines)


def apply_mapping(graph: NetworkGraph, model: PlatformModel) -> NetworkGraph:
    """Predict the toolchain's layer fusion; multi-input followers stay standalone."""
    return fuse_graph(graph, model.decide_fusion, allow_multi_input=False)


def _compute_term(layer: LayerSpec, model: PlatformModel, family: str):
    """(seconds, u_eff, u_stat, model_used) of an unfused layer's compute term."""
    p = model.constants.peaks(layer.kind)[0]
    f = op_count(layer)
    if family == "roofline" or layer.kind in SIMPLE_KINDS:
        return f / p, 1.0, 1.0, "roofline"
    ue = model.u_eff_of(layer) if family in ("refined", "mixed") else None
    us = model.u_stat_of(layer) if family in ("statistical", "mixed") else None
    unrolled = layer.kind.value in model.constants.unrolled_kinds
    if family == "refined":
        used = "refined" if ue is not None else FALLBACK
    elif family == "statistical":
        used = "statistical" if us is not None else FALLBACK
    elif ue is not None and us is not None:
        used = "mixed"
    elif us is not None:
        used = "statistical"
    elif ue is not None and unrolled:
        used = "refined"
    else:
        used = FALLBACK
    ue = 1.0 if ue is None or used in (FALLBACK, "statistical") else ue
    us = 1.0 if us is None or used in (FALLBACK, "refined") else us
    return f / (p * ue * us), ue, us, used


def estimate_layer(layer: LayerSpec, model: PlatformModel, family: str = "mixed") -> LayerEstimate:
    """Estimate one post-fusion layer, degrading to simpler families when components are missing."""
    if family not in FAMILIES:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}")
    bw = model.constants.byte_width
    bare = layer.unfused()
    compute, ue, us, used = _compute_term(bare, model, family)

    def standalone(op: LayerSpec) -> float:
        c = _compute_term(op, model, family)[0]
        return max(c, data_volume(op, bw).total / model.constants.peaks(op.kind)[1])

    f_total, d, follower_t = fuse_adjust(layer, layer.fused_ops, bw, standalone)
    compute += follower_t
    data_t = d / model.constants.peaks(bare.kind)[1]
    t = max(compute, data_t)
    regime = "compute-bound" if compute >= data_t else "bandwidth-bound"
    return LayerEstimate(layer.name, bare.kind.value, used, t, ue, us, f_total / t, regime)


def estimate_network(graph: NetworkGraph, model: PlatformModel, family: str = "mixed") -> EstimationReport:
    executed = apply_mapping(graph, model)
    rows = [estimate_layer(layer, model, family) for layer in executed.topological_order()
            if layer.kind is not K.DATA_INPUT]
    total = 0.0
    for e in rows:
        total += e.t_hat
    fallbacks = sum(e.model_used == FALLBACK for e in rows)
    return EstimationReport(total, tuple(rows), executed, family, fallbacks)
