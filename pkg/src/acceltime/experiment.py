"""Characterization and evaluation pipelines.

``characterize`` is the whole benchmark phase against one device: axis
sweeps for the unrolling fit, an efficiency-surface sweep at the fitted
unrolling, micro-kernel sweeps for every other layer kind and multi-layer
sweeps exposing layer fusion. ``evaluate_networks`` compares measured and
estimated network latencies for every model family.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bench import BenchmarkRun, SweepSpec, generate_configs, index_table, run_benchmark
from .estimate import estimate_network
from .fitting import FitConfig, fit_platform_model, fit_unrolling_from_records
from .graph import K, NetworkGraph
from .metrics import UndefinedMetricError, metric_mae, metric_mape, metric_rmspe, metric_spearman
from .models import FAMILIES, PlatformModel
from .oracle import Device

log = logging.getLogger(__name__)

_SIDES = (4, 7, 8, 14, 16, 28, 32, 56, 64)
_CHANNELS = tuple(range(8, 161, 4)) + (192, 256, 320, 384, 512)


@dataclass
class CharacterizationPlan:
    """Sweep ranges of the benchmark phase; every size is a budget knob."""

    axis_ranges: dict = field(default_factory=lambda: dict(
        h=range(8, 65), w=range(8, 65), c=range(8, 97), f=range(8, 97), k=(3,), stride=(1,)))
    surface_ranges: dict = field(default_factory=lambda: dict(
        h=_SIDES, c=range(8, 521, 8), f=range(4, 521, 4), k=(1, 3, 5), stride=(1, 2)))
    surface_configs: int = 1500
    # extra sweep of the noise-augmented surface, for dataset comparisons
    noisy_surface_configs: int = 0
    micro_configs: int = 300
    convnet_configs: int = 1500
    fcnet_configs: int = 100
    seed: int = 0

    def micro_sweeps(self) -> list[SweepSpec]:
        sides, chans = _SIDES, _CHANNELS
        pools = dict(h=sides, c=chans, k=(2, 3, 4, 5), stride=(1, 2))
        plain = dict(h=sides, c=chans)
        return [
            SweepSpec("DepthwiseConv2D", dict(h=sides, c=chans, k=(1, 3, 5, 7), stride=(1, 2))),
            SweepSpec("MaxPool", pools),
            SweepSpec("AvgPool", pools),
            SweepSpec("GlobalAvgPool", plain),
            SweepSpec("BatchNorm", plain),
            SweepSpec("Activation", plain),
            SweepSpec("ElemwiseAdd", plain),
            SweepSpec("Concat", plain),
            SweepSpec("FullyConnected", dict(neurons_in=(8, 16, 32, 64, 100, 128, 256, 512, 640, 1024, 2048),
                                             neurons_out=(10, 16, 64, 100, 128, 256, 1000, 1024, 2048))),
        ]

    def fusion_sweeps(self) -> list[SweepSpec]:
        conv = dict(h=(8, 14, 16, 28, 32), c=range(8, 161), f=range(8, 161), k=(1, 3))
        return [
            SweepSpec("Conv2D", dict(conv, pool_kind=("MaxPool", "AvgPool"), pool_size=(2, 3, 4),
                                     pool_stride=(1, 2)), graph="convnet"),
            SweepSpec("Conv2D", dict(h=(7, 8, 14), c=range(8, 161), f=range(8, 161), k=(1, 3),
                                     neurons_out=(10, 1000)), graph="fcnet"),
        ]


def _run(specs, device, n_iter, seed) -> BenchmarkRun:
    rows = []
    for spec in specs:
        rows.extend(generate_configs(spec))
    return run_benchmark(index_table(rows), device, n_iter, seed)


def _capped(spec: SweepSpec, n: Optional[int], seed: int) -> SweepSpec:
    spec.max_configs = n
    spec.seed = seed
    return spec


@dataclass
class Characterization:
    records: list
    events: list
    failures: list


def characterize(device: Device, plan: CharacterizationPlan = CharacterizationPlan(), n_iter: int = 20,
                 seed: int = 0, config: FitConfig = FitConfig()) -> Characterization:
    """Run every benchmark sweep of the characterization phase on ``device``."""
    axis = _run([SweepSpec("Conv2D", plan.axis_ranges, "axis-sweep")], device, n_iter, seed)
    fit = fit_unrolling_from_records(axis.records, config)
    axis_map, s, alpha = zip(*fit.unrolled) if fit.unrolled else ((), (), ())
    log.info("preliminary unrolling s=%s alpha=%s on %s", s, alpha, axis_map)

    specs = [_capped(SweepSpec("Conv2D", plan.surface_ranges, "efficiency-surface",
                               unrolling=(tuple(s), tuple(axis_map))), plan.surface_configs, plan.seed)]
    if plan.noisy_surface_configs:
        specs.append(_capped(SweepSpec("Conv2D", plan.surface_ranges, "noisy-surface",
                                       unrolling=(tuple(s), tuple(axis_map))), plan.noisy_surface_configs,
                             plan.seed + 1))
    specs += [_capped(sp, plan.micro_configs, plan.seed) for sp in plan.micro_sweeps()]
    conv, fc = plan.fusion_sweeps()
    specs += [_capped(conv, plan.convnet_configs, plan.seed), _capped(fc, plan.fcnet_configs, plan.seed)]
    # distinct seed stream from the axis sweep so configuration indices never share noise
    rest = _run(specs, device, n_iter, seed + 1)
    return Characterization(axis.records + rest.records, axis.events + rest.events,
                            axis.failures + rest.failures)


def build_platform_model(device: Device, plan: CharacterizationPlan = CharacterizationPlan(), n_iter: int = 20,
                         seed: int = 0, config: FitConfig = FitConfig()) -> PlatformModel:
    ch = characterize(device, plan, n_iter, seed, config)
    return fit_platform_model(ch.records, ch.events, config)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class NetworkResult:
    name: str
    family: str
    measured_sec: float
    estimated_sec: float


@dataclass(frozen=True)
class Aggregate:
    family: str
    mae_ms: float
    mape: float
    rmspe: float
    spearman: Optional[float]

    def to_row(self) -> dict:
        return {"family": self.family, "mae_ms": self.mae_ms, "mape": self.mape, "rmspe": self.rmspe,
                "spearman": self.spearman}


@dataclass(frozen=True)
class EvalResult:
    networks: tuple  # NetworkResult rows
    aggregates: dict  # family -> Aggregate
    f1: Optional[float] = None
    mcc: Optional[float] = None

    def table(self) -> str:
        head = f"{'network':<20}{'family':<13}{'measured [ms]':>15}{'estimated [ms]':>16}{'error [%]':>11}"
        lines = [head, "-" * len(head)]
        for r in self.networks:
            err = (r.estimated_sec - r.measured_sec) / r.measured_sec * 100
            lines.append(f"{r.name:<20}{r.family:<13}{r.measured_sec * 1e3:>15.4f}{r.estimated_sec * 1e3:>16.4f}"
                         f"{err:>11.2f}")
        lines += ["", f"{'family':<13}{'MAE [ms]':>10}{'MAPE [%]':>10}{'RMSPE [%]':>11}{'rho':>8}", "-" * 52]
        for a in self.aggregates.values():
            rho = "n/a" if a.spearman is None else f"{a.spearman:.4f}"
            lines.append(f"{a.family:<13}{a.mae_ms:>10.4f}{a.mape:>10.2f}{a.rmspe:>11.2f}{rho:>8}")
        if self.mcc is not None:
            lines.append(f"fusion: F1={self.f1:.4f} MCC={self.mcc:.4f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = ["network,family,measured_sec,estimated_sec"]
        rows += [f"{r.name},{r.family},{r.measured_sec!r},{r.estimated_sec!r}" for r in self.networks]
        return "\n".join(rows) + "\n"


def measure_network(graph: NetworkGraph, device: Device, n_iter: int = 20, seed: int = 0) -> float:
    return float(sum(m.time_sec for m in device.profile(graph, n_iter, seed) if m.layer.kind is not K.DATA_INPUT))


def evaluate_networks(networks: Sequence[tuple[str, NetworkGraph]], device: Device, model: PlatformModel,
                      families: Sequence[str] = FAMILIES, n_iter: int = 20, seed: int = 0) -> EvalResult:
    """Per-network measured vs estimated totals and per-family aggregates."""
    measured = [measure_network(g, device, n_iter, int(np.random.SeedSequence([seed, i]).generate_state(1)[0]))
                for i, (_, g) in enumerate(networks)]
    rows, aggs = [], {}
    for family in families:
        est = [estimate_network(g, model, family).total_sec for _, g in networks]
        rows += [NetworkResult(n, family, m, e) for (n, _), m, e in zip(networks, measured, est)]
        try:
            rho = metric_spearman(measured, est) if len(networks) > 1 else None
        except UndefinedMetricError:
            rho = None
        aggs[family] = Aggregate(family, metric_mae(measured, est) * 1e3, metric_mape(measured, est),
                                 metric_rmspe(measured, est), rho)
    return EvalResult(tuple(rows), aggs)
