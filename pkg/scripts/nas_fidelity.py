"""Rank NAS-style cell networks by estimated latency and check the ranking.

    python3 scripts/nas_fidelity.py --networks 34 --out out/nas.csv
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
    nas_network,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--networks", type=int, default=34)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out", type=Path, default=Path("out/nas.csv"))
    args = ap.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)

    device = OracleDevice(default_oracle(noise_rel_sigma=0.05, memory_term=MemoryTerm(buffer_bytes=2 ** 18)))
    ch = characterize(device, seed=args.seed)
    model = fit_platform_model(ch.records, ch.events, FitConfig(timestamps=False))
    nets = [(f"nas{i}", nas_network(i)) for i in range(args.networks)]
    res = evaluate_networks(nets, device, model, seed=5)
    args.out.write_text(res.to_csv())
    print(res.table())


if __name__ == "__main__":
    main()
