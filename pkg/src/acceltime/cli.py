"""Command-line front end: oracle-make, bench, fit, estimate, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import load_events, load_records, load_table, run_benchmark, save_events, save_records
from .estimate import estimate_network
from .experiment import CharacterizationPlan, characterize, evaluate_networks
from .fitting import FitConfig, InsufficientDataError, fit_platform_model
from .graph import GraphError, load_graph, save_graph
from .learn.forest import ForestParams
from .learn.unrolling import UnrollingFitError
from .models import FAMILIES, PlatformModelError, load_platform_model, save_platform_model
from .oracle import MemoryTerm, OracleDevice, default_oracle, load_oracle, save_oracle
from .synth import nas_network, random_network

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_DATA = 5


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


def _need(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError("missing-file", f"no such file: {p}", EXIT_MISSING)
    return p


def _write(text: str, out) -> None:
    if out:
        Path(out).write_text(text)


def cmd_oracle_make(args) -> None:
    overrides = {"noise_rel_sigma": args.noise, "overhead_sec": args.overhead}
    if args.memory_buffer:
        overrides["memory_term"] = MemoryTerm(buffer_bytes=args.memory_buffer)
    spec = default_oracle(**overrides)
    if args.out:
        save_oracle(spec, args.out)
        print(f"wrote oracle spec to {args.out}")
    else:
        from .oracle import oracle_to_dict
        print(json.dumps(oracle_to_dict(spec), indent=2))


def _plan(name: str) -> CharacterizationPlan:
    if name == "quick":
        return CharacterizationPlan(surface_configs=400, micro_configs=80, convnet_configs=400, fcnet_configs=40)
    return CharacterizationPlan()


def cmd_bench(args) -> None:
    device = OracleDevice(load_oracle(_need(args.oracle)))
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.table:
        run = run_benchmark(load_table(_need(args.table)), device, args.iters, args.seed)
    else:
        run = characterize(device, _plan(args.plan), args.iters, args.seed)
    save_records(run.records, out / "records.csv")
    save_events(run.events, out / "events.csv")
    print(f"{len(run.records)} records, {len(run.events)} fusion events, {len(run.failures)} failed configurations "
          f"-> {out}")
    for idx, msg in run.failures:
        print(f"  config {idx}: {msg}", file=sys.stderr)


def cmd_fit(args) -> None:
    records = load_records(_need(args.records))
    events = load_events(_need(args.events)) if args.events else []
    config = FitConfig(forest=ForestParams(n_trees=args.trees, seed=args.seed), timestamps=not args.no_timestamps,
                       device=args.device)
    model = fit_platform_model(records, events, config)
    c = model.constants
    if args.out:
        save_platform_model(model, args.out)
    print(f"s={c.s} alpha={tuple(round(a, 4) for a in c.alpha)} axes={c.axis_map} "
          f"p_peak={c.p_peak:.4g} ops/s b_peak={c.b_peak:.4g} B/s; "
          f"{len(model.u_stat_models)} u_stat forests, {len(model.fusion_models)} fusion trees")


def cmd_estimate(args) -> None:
    model = load_platform_model(_need(args.model))
    graph = load_graph(_need(args.graph))
    report = estimate_network(graph, model, args.family)
    _write(report.to_json() + "\n", args.out)
    if args.verbose:
        print(report.table())
    print(f"estimated latency ({args.family}): {report.total_sec * 1e3:.6f} ms over {len(report.layers)} "
          f"executed layers ({report.fallback_count} fallbacks)")


def cmd_evaluate(args) -> None:
    model = load_platform_model(_need(args.model))
    device = OracleDevice(load_oracle(_need(args.oracle)))
    networks = [(Path(p).stem, load_graph(_need(p))) for p in args.graph or ()]
    make = nas_network if args.synthetic_kind == "nas" else random_network
    networks += [(f"{args.synthetic_kind}{i}", make(args.seed * 1000 + i)) for i in range(args.synthetic)]
    if not networks:
        raise CliError("usage", "evaluate needs --graph files or --synthetic N", EXIT_USAGE)
    families = [args.family] if args.family else list(FAMILIES)
    result = evaluate_networks(networks, device, model, families, args.iters, args.seed)
    _write(result.to_csv(), args.out)
    print(result.table())


def cmd_graph(args) -> None:
    make = nas_network if args.kind == "nas" else random_network
    save_graph(make(args.seed), args.out)
    print(f"wrote {args.kind} network (seed {args.seed}) to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acceltime", description="Layer-wise latency models for DNN accelerators")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle-make", help="write a synthetic device specification")
    o.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise sigma")
    o.add_argument("--overhead", type=float, default=0.0, help="per-layer launch overhead [s]")
    o.add_argument("--memory-buffer", type=float, default=0.0,
                   help="enable the memory-efficiency term with this buffer size [bytes]")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle_make)

    b = sub.add_parser("bench", help="run benchmark sweeps against a device")
    b.add_argument("--oracle", required=True)
    b.add_argument("--table", help="configuration table to run instead of the full characterization")
    b.add_argument("--plan", choices=("full", "quick"), default="full")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--iters", type=int, default=20)
    b.add_argument("--out", help="output directory for records.csv and events.csv")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("fit", help="generate a platform model from benchmark records")
    f.add_argument("--records", required=True)
    f.add_argument("--events")
    f.add_argument("--trees", type=int, default=100)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--device", default="unknown")
    f.add_argument("--no-timestamps", action="store_true")
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("estimate", help="estimate the latency of a network graph")
    e.add_argument("--model", required=True)
    e.add_argument("--graph", required=True)
    e.add_argument("--family", choices=FAMILIES, default="mixed")
    e.add_argument("--out", help="write the report document here")
    e.add_argument("-v", "--verbose", action="store_true", help="print the per-layer table")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("evaluate", help="compare estimates with device measurements")
    v.add_argument("--model", required=True)
    v.add_argument("--oracle", required=True)
    v.add_argument("--graph", action="append")
    v.add_argument("--synthetic", type=int, default=0, help="add N generated networks")
    v.add_argument("--synthetic-kind", choices=("random", "nas"), default="random")
    v.add_argument("--family", choices=FAMILIES)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--iters", type=int, default=20)
    v.add_argument("--out", help="write per-network rows as CSV")
    v.set_defaults(func=cmd_evaluate)

    g = sub.add_parser("graph", help="write a generated network graph document")
    g.add_argument("--kind", choices=("random", "nas"), default="random")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_graph)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.code
    except InsufficientDataError as exc:
        print(f"error [insufficient-data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnrollingFitError as exc:
        print(f"error [insufficient-data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GraphError, PlatformModelError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error [schema]: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except FileNotFoundError as exc:
        print(f"error [missing-file]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return 0


if __name__ == "__main__":
    sys.exit(main())
