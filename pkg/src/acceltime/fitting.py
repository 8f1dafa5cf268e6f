"""Model generation: benchmark records in, PlatformModel out."""

from __future__ import annotations

import datetime
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bench import FusionEvent, LayerRecord
from .graph import K, LayerKind
from .learn.forest import U_MIN, ForestParams, fit_forest
from .learn.tree import fit_tree
from .learn.unrolling import AXES, S_CANDIDATES, UnrollingFit, efficiency, fit_unrolling
from .models import (
    HARD_FUSED_FOLLOWERS,
    SIMPLE_KINDS,
    HardwareConstants,
    PlatformModel,
    feature_row,
    fusion_row,
)
from .oracle import FUSED, NOT_FUSED

log = logging.getLogger(__name__)


BW_MARGIN = 0.9


class InsufficientDataError(ValueError):
    pass


@dataclass
class FitConfig:
    byte_width: int = 1
    candidate_axes: tuple = AXES
    s_candidates: tuple = S_CANDIDATES
    unrolled_kinds: tuple = ("Conv2D",)
    forest: ForestParams = field(default_factory=ForestParams)
    # None: every kind with micro-kernel records that is not estimated by plain roofline
    forest_kinds: Optional[tuple] = None
    fusion_max_depth: Optional[int] = None
    # sweep modes whose records train u_stat: the u_eff = 1 surface, the
    # noise-augmented surface, or both
    u_stat_modes: tuple = ("efficiency-surface",)
    mse_rtol: float = 1e-6
    device: str = "unknown"
    timestamps: bool = True


def _micro(records, kind) -> list[LayerRecord]:
    return [r for r in records if r.kind == kind and r.unfused and r.graph in ("micro-kernel", "")]


def _peaks(records, byte_width) -> tuple[float, float]:
    ops = np.array([r.num_ops for r in records], dtype=float)
    data = np.array([r.num_in + r.num_weights + r.num_out for r in records], dtype=float) * byte_width
    t = np.array([r.time_sec for r in records])
    return float(np.max(ops / t)), float(np.max(data / t))


def u_stat_targets(records, constants: HardwareConstants) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Features, u_stat targets and analytic efficiency of micro-kernel records.

    The target is whatever efficiency, on top of u_eff, reproduces the
    measured time: ops / (time * p_peak * u_eff).
    """
    if not records:
        return np.empty((0, 11)), np.empty(0), np.empty(0)
    kind = records[0].kind
    p = constants.peaks(kind)[0]
    X = np.array([feature_row(r.spec()) for r in records])
    if kind in constants.unrolled_kinds and constants.has_unrolling:
        idx = [AXES.index(a) for a in constants.axis_map]
        ue = efficiency(X[:, idx], constants.s, constants.alpha)
    else:
        ue = np.ones(len(records))
    ops = np.array([r.num_ops for r in records], dtype=float)
    t = np.array([r.time_sec for r in records])
    target = np.clip(ops / (t * p * ue), U_MIN, 1.0)
    return X, target, ue


def compute_bound_mask(records, constants: HardwareConstants, margin: float = BW_MARGIN) -> np.ndarray:
    """Records whose measured throughput stays clearly below the kind's bandwidth peak.

    A bandwidth-bound time says nothing about compute efficiency, so only
    these records train u_stat.
    """
    if not records:
        return np.zeros(0, dtype=bool)
    b = constants.peaks(records[0].kind)[1]
    data = np.array([r.num_in + r.num_weights + r.num_out for r in records], dtype=float) * constants.byte_width
    t = np.array([r.time_sec for r in records])
    return data / t < margin * b


def fit_unrolling_from_records(records: Sequence[LayerRecord], config: FitConfig = FitConfig(),
                               kind: str = "Conv2D") -> UnrollingFit:
    micro = _micro(records, kind)
    sweeps = [r for r in micro if r.mode == "axis-sweep"] or micro
    if not sweeps:
        raise InsufficientDataError(f"no {kind} micro-kernel records to fit unrolling")
    return fit_unrolling(sweeps, config.candidate_axes, config.s_candidates, config.byte_width,
                         mse_rtol=config.mse_rtol)


def fit_platform_model(records: Sequence[LayerRecord], events: Sequence[FusionEvent] = (),
                       config: FitConfig = FitConfig()) -> PlatformModel:
    if not records:
        raise InsufficientDataError("insufficient data: no benchmark records")
    bw = config.byte_width
    kinds = sorted({r.kind for r in records})
    kind_peaks = {}
    for kind in kinds:
        micro = _micro(records, kind)
        if micro:
            kind_peaks[kind] = _peaks(micro, bw)

    meta = {"device": config.device, "n_records": len(records), "n_events": len(events)}
    anchor_kind = config.unrolled_kinds[0] if config.unrolled_kinds else "Conv2D"
    s, alpha, axis_map = (), (), ()
    if anchor_kind in kind_peaks:
        fit = fit_unrolling_from_records(records, config, anchor_kind)
        axis_map, s, alpha = zip(*fit.unrolled) if fit.unrolled else ((), (), ())
        s, alpha, axis_map = tuple(s), tuple(alpha), tuple(axis_map)
        # final peaks: best throughput among records the fitted model calls fully efficient
        micro = _micro(records, anchor_kind)
        X = np.array([[getattr(r, a) for a in axis_map] for r in micro], dtype=float).reshape(len(micro), -1)
        full = [r for r, u in zip(micro, efficiency(X, s, alpha)) if abs(u - 1.0) <= 1e-12]
        p_final, _ = _peaks(full or micro, bw)
        _, b_final = _peaks(micro, bw)
        kind_peaks[anchor_kind] = (p_final, b_final)
        meta["unrolling"] = {
            "s": list(fit.s), "alpha": list(fit.alpha), "axis_map": list(fit.axis_map),
            "p_peak_prelim": fit.p_peak_prelim, "b_peak_prelim": fit.b_peak_prelim,
            "residual_mse": fit.residual_mse,
        }
    if not kind_peaks:
        raise InsufficientDataError("insufficient data: no micro-kernel records")
    p_peak, b_peak = kind_peaks.get(anchor_kind, next(iter(kind_peaks.values())))
    constants = HardwareConstants(p_peak, b_peak, s, alpha, axis_map, bw, kind_peaks, config.unrolled_kinds)

    forest_kinds = config.forest_kinds
    if forest_kinds is None:
        forest_kinds = tuple(k for k in kind_peaks
                             if LayerKind(k) not in SIMPLE_KINDS and LayerKind(k) is not K.DATA_INPUT)
    forests = {}
    for kind in forest_kinds:
        micro = _micro(records, kind)
        if not micro:
            continue
        surface = [r for r in micro if r.mode in config.u_stat_modes] or micro
        X, y, ue = u_stat_targets(surface, constants)
        # compute-bound points; outside the chosen modes only fully efficient ones
        chosen = np.array([r.mode in config.u_stat_modes for r in surface])
        keep = ((np.abs(ue - 1.0) <= 1e-12) | chosen) & compute_bound_mask(surface, constants)
        X, y = X[keep], y[keep]
        if len(X) < 2 * config.forest.min_samples_leaf:
            log.info("no compute-bound records for %s; it is estimated without u_stat", kind)
            continue
        forests[kind] = fit_forest(X, y, config.forest)

    trees = {}
    groups: dict[tuple, list] = {}
    for ev in events:
        if LayerKind(ev.follower.kind) in HARD_FUSED_FOLLOWERS or ev.multi_input:
            continue
        if ev.state not in (FUSED, NOT_FUSED):
            continue  # possibly-fused labels are ambiguous
        groups.setdefault(ev.pair, []).append(ev)
    for pair, evs in sorted(groups.items()):
        X = np.array([fusion_row(e.anchor, e.follower) for e in evs])
        y = np.array([1.0 if e.state == FUSED else 0.0 for e in evs])
        trees[pair] = fit_tree(X, y, config.fusion_max_depth, 1, "classification")

    if config.timestamps:
        meta["fit_date"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return PlatformModel(constants, forests, trees, meta)
