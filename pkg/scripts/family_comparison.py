"""Compare the four latency families on held-out random networks.

The oracle carries measurement noise and an on-chip buffer term that no
analytic family can express, so the learned efficiency has real work to do.
Writes per-network rows and an aggregate table, and prints fusion-prediction
quality on the held-out networks.

    python3 scripts/family_comparison.py --networks 50 --out out/families
"""

import argparse
from pathlib import Path

from acceltime import (
    FitConfig,
    MemoryTerm,
    OracleDevice,
    characterize,
    default_oracle,
    evaluate_networks,
    fit_platform_model,
    random_network,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--networks", type=int, default=50)
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--buffer-bytes", type=int, default=2 ** 18)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out", type=Path, default=Path("out/families"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    spec = default_oracle(noise_rel_sigma=args.noise, memory_term=MemoryTerm(buffer_bytes=args.buffer_bytes))
    device = OracleDevice(spec)
    ch = characterize(device, seed=args.seed)
    model = fit_platform_model(ch.records, ch.events, FitConfig(timestamps=False))

    nets = [(f"net{i}", random_network(10_000 + i)) for i in range(args.networks)]
    res = evaluate_networks(nets, device, model, seed=3)
    (args.out / "networks.csv").write_text(res.to_csv())
    with open(args.out / "aggregate.csv", "w") as fh:
        fh.write("family,mae_ms,mape,rmspe,spearman\n")
        for a in res.aggregates.values():
            fh.write(f"{a.family},{a.mae_ms:.6f},{a.mape:.4f},{a.rmspe:.4f},{a.spearman:.6f}\n")
    print(res.table())


if __name__ == "__main__":
    main()
