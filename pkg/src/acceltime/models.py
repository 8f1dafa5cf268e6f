"""Layer latency model families, the fusion model, and the platform model file.

Families, from simplest to most complete:

* roofline     T = max(f / P, D / B)
* refined      T = max(f / (P * u_eff), D / B)
* statistical  T = max(f / (P * u_stat), D / B)
* mixed        T = max(f / (P * u_eff * u_stat), D / B)

``u_eff`` is the analytic array-utilization efficiency, ``u_stat`` a forest
regression of the remaining efficiency loss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .graph import (
    ANCHOR_KINDS,
    K,
    LayerKind,
    LayerSpec,
    data_volume,
    layer_features,
    op_count,
    output_shape,
)
from .learn.forest import U_MIN, ForestModel
from .learn.tree import TreeModel

FORMAT_VERSION = 1
FAMILIES = ("roofline", "refined", "statistical", "mixed")
# kinds estimated with the plain roofline and their own measured peaks
SIMPLE_KINDS = frozenset({K.MAX_POOL, K.AVG_POOL, K.GLOBAL_AVG_POOL, K.DEPTHWISE_CONV2D, K.FULLY_CONNECTED})
HARD_FUSED_FOLLOWERS = frozenset({K.BATCH_NORM, K.ACTIVATION})


class PlatformModelError(ValueError):
    pass


@dataclass(frozen=True)
class HardwareConstants:
    p_peak: float
    b_peak: float
    s: tuple = ()
    alpha: tuple = ()
    axis_map: tuple = ()
    byte_width: int = 1
    # kind -> (p_peak, b_peak)
    kind_peaks: dict = field(default_factory=dict)
    unrolled_kinds: tuple = ("Conv2D",)

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "axis_map", tuple(self.axis_map))
        object.__setattr__(self, "unrolled_kinds", tuple(self.unrolled_kinds))
        object.__setattr__(self, "kind_peaks", {k: (float(v[0]), float(v[1])) for k, v in self.kind_peaks.items()})
        if not (self.p_peak > 0 and self.b_peak > 0):
            raise ValueError("peaks must be positive")
        if not (len(self.s) == len(self.alpha) == len(self.axis_map)):
            raise ValueError("s, alpha and axis_map must have equal length")
        if any(not 0.0 <= a <= 1.0 for a in self.alpha):
            raise ValueError("alpha entries must lie in [0, 1]")

    @property
    def has_unrolling(self) -> bool:
        return len(self.s) > 0

    def peaks(self, kind) -> tuple[float, float]:
        return self.kind_peaks.get(LayerKind(kind).value, (self.p_peak, self.b_peak))


@dataclass(frozen=True)
class LayerEstimate:
    name: str
    kind: str
    model_used: str
    t_hat: float
    u_eff: float
    u_stat: float
    p_eff: float
    regime: str

    def to_row(self) -> dict:
        return {"name": self.name, "kind": self.kind, "model_used": self.model_used, "t_hat": self.t_hat,
                "u_eff": self.u_eff, "u_stat": self.u_stat, "p_eff": self.p_eff, "regime": self.regime}


# ---------------------------------------------------------------------------
# time models

def _check(f_n, d_n):
    if not (math.isfinite(f_n) and math.isfinite(d_n)):
        raise ValueError("ops and data must be finite")
    if f_n < 0 or d_n < 0 or (f_n == 0 and d_n == 0):
        raise ValueError("ops and data must be non-negative and not both zero")


def roofline_time(f_n: float, d_n: float, p_peak: float, b_peak: float) -> float:
    _check(f_n, d_n)
    return max(f_n / p_peak, d_n / b_peak)


def u_eff(x: Sequence[float], s: Sequence[int], alpha: Sequence[float]) -> float:
    """Utilization of an array unrolled by ``s`` when mapping dimensions ``x``."""
    u = 1.0
    for xi, si, ai in zip(x, s, alpha):
        if xi <= 0:
            raise ValueError("mapped dimensions must be positive")
        frag = math.ceil(xi / si) / (xi / si)
        u *= 1.0 / (ai + frag * (1.0 - ai))
    return u


def mapped_dims(layer: LayerSpec, axis_map: Sequence[str]) -> tuple[int, ...]:
    dims = {"h": layer.height, "w": layer.width, "c": layer.channels, "f": layer.filters}
    return tuple(dims[a] for a in axis_map)


def refined_time(f_n: float, d_n: float, u: float, p_peak: float, b_peak: float) -> float:
    _check(f_n, d_n)
    return max(f_n / (p_peak * u), d_n / b_peak)


def statistical_time(f_n: float, d_n: float, u_stat: float, p_peak: float, b_peak: float) -> float:
    _check(f_n, d_n)
    u_stat = min(max(u_stat, U_MIN), 1.0)
    return max(f_n / (p_peak * u_stat), d_n / b_peak)


def mixed_time(f_n: float, d_n: float, u: float, u_stat: float, p_peak: float, b_peak: float) -> float:
    _check(f_n, d_n)
    u_stat = min(max(u_stat, U_MIN), 1.0)
    return max(f_n / (p_peak * u * u_stat), d_n / b_peak)


def fused_data(anchor: LayerSpec, followers: Sequence[LayerSpec], byte_width: int) -> float:
    """Off-chip bytes of a fused kernel: the intermediate tensors stay on chip."""
    bare = anchor.unfused()
    vol = data_volume(bare, byte_width)
    last = followers[-1] if followers else bare
    return vol.bytes_in + vol.bytes_weights + data_volume(last, byte_width).bytes_out


def fuse_adjust(anchor: LayerSpec, followers: Sequence[LayerSpec], byte_width: int,
                follower_time: Callable[[LayerSpec], float]) -> tuple[int, float, float]:
    """(total ops, fused data bytes, summed standalone times of the followers).

    The followers' standalone times join the anchor's compute term.
    """
    shape = output_shape(anchor.unfused())
    for fol in followers:
        if (fol.height, fol.width, fol.channels) != shape:
            raise ValueError(f"incompatible shapes: {fol.name!r} expects {(fol.height, fol.width, fol.channels)}, "
                             f"producer gives {shape}")
        shape = output_shape(fol)
    f_total = op_count(anchor.unfused()) + sum(op_count(f) for f in followers)
    return f_total, fused_data(anchor, followers, byte_width), float(sum(follower_time(f) for f in followers))


def feature_row(layer: LayerSpec) -> np.ndarray:
    return np.array(layer_features(layer).as_tuple(), dtype=float)


def fusion_row(anchor: LayerSpec, follower: LayerSpec) -> np.ndarray:
    """Anchor features followed by follower features."""
    return np.concatenate([feature_row(anchor), feature_row(follower)])


def predict_fusion(anchor: LayerSpec, follower: LayerSpec, tree: Optional[TreeModel]) -> bool:
    if LayerKind(anchor.kind) in ANCHOR_KINDS and LayerKind(follower.kind) in HARD_FUSED_FOLLOWERS:
        return True
    if tree is None:
        return False
    return bool(tree.predict(fusion_row(anchor, follower)[None, :])[0] == 1)


# ---------------------------------------------------------------------------
# platform model

@dataclass
class PlatformModel:
    constants: HardwareConstants
    u_stat_models: dict = field(default_factory=dict)  # kind -> ForestModel
    fusion_models: dict = field(default_factory=dict)  # (anchor kind, follower kind) -> TreeModel
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for kind, forest in self.u_stat_models.items():
            lo, hi = forest.target_range
            if not (0.0 < lo and hi <= 1.0):
                raise PlatformModelError(f"u_stat training targets for {kind} outside (0, 1]")

    def decide_fusion(self, anchor: LayerSpec, follower: LayerSpec) -> bool:
        tree = self.fusion_models.get((anchor.kind.value, follower.kind.value))
        return predict_fusion(anchor, follower, tree)

    def u_eff_of(self, layer: LayerSpec) -> Optional[float]:
        """Analytic efficiency, or None if the kind is unrolled but no fit exists."""
        if layer.kind.value not in self.constants.unrolled_kinds:
            return 1.0
        if not self.constants.has_unrolling:
            return None
        c = self.constants
        return u_eff(mapped_dims(layer, c.axis_map), c.s, c.alpha)

    def u_stat_of(self, layer: LayerSpec) -> Optional[float]:
        forest = self.u_stat_models.get(layer.kind.value)
        if forest is None:
            return None
        return float(forest.predict(feature_row(layer)[None, :])[0])


def _constants_to_dict(c: HardwareConstants) -> dict:
    return {"p_peak": c.p_peak, "b_peak": c.b_peak, "s": list(c.s), "alpha": list(c.alpha),
            "axis_map": list(c.axis_map), "byte_width": c.byte_width,
            "kind_peaks": {k: list(v) for k, v in c.kind_peaks.items()},
            "unrolled_kinds": list(c.unrolled_kinds)}


def platform_to_dict(model: PlatformModel) -> dict:
    return {
        "format": "platform-model",
        "version": FORMAT_VERSION,
        "constants": _constants_to_dict(model.constants),
        "u_stat_models": {k: f.to_dict() for k, f in sorted(model.u_stat_models.items())},
        "fusion_models": [{"anchor": a, "follower": b, "tree": t.to_dict()}
                          for (a, b), t in sorted(model.fusion_models.items())],
        "metadata": model.metadata,
    }


def platform_from_dict(doc) -> PlatformModel:
    if not isinstance(doc, dict) or doc.get("format") != "platform-model":
        raise PlatformModelError("not a platform-model document")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise PlatformModelError(f"unsupported platform-model version {version!r} (expected {FORMAT_VERSION})")
    try:
        constants = HardwareConstants(**doc["constants"])
        forests = {k: ForestModel.from_dict(v) for k, v in doc["u_stat_models"].items()}
        trees = {(e["anchor"], e["follower"]): TreeModel.from_dict(e["tree"]) for e in doc["fusion_models"]}
        for kind in forests:
            LayerKind(kind)
        return PlatformModel(constants, forests, trees, dict(doc.get("metadata", {})))
    except PlatformModelError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise PlatformModelError(f"schema violation: {type(exc).__name__}: {exc}") from None


def save_platform_model(model: PlatformModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(platform_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_platform_model(path) -> PlatformModel:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlatformModelError(f"schema violation: truncated or malformed file ({exc})") from None
    return platform_from_dict(doc)
