"""Train the learned efficiency on each sweep dataset and compare accuracy.

Datasets: the u_eff = 1 surface alone, the noise-augmented surface alone,
and their union. The shipped default is the first.

    python3 scripts/dataset_comparison.py --out out/datasets.csv
"""

import argparse
from dataclasses import replace
from pathlib import Path

from acceltime import (
    CharacterizationPlan,
    FitConfig,
    MemoryTerm,
    OracleDevice,
    characterize,
    default_oracle,
    evaluate_networks,
    fit_platform_model,
    random_network,
)

DATASETS = {
    "surface": ("efficiency-surface",),
    "noisy-surface": ("noisy-surface",),
    "union": ("efficiency-surface", "noisy-surface"),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--networks", type=int, default=50)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out", type=Path, default=Path("out/datasets.csv"))
    args = ap.parse_args()
    args.out.parent.mkdir(parents=True, exist_ok=True)

    device = OracleDevice(default_oracle(noise_rel_sigma=0.05, memory_term=MemoryTerm(buffer_bytes=2 ** 18)))
    ch = characterize(device, replace(CharacterizationPlan(), noisy_surface_configs=1500), seed=args.seed)
    nets = [(f"net{i}", random_network(10_000 + i)) for i in range(args.networks)]
    with open(args.out, "w") as fh:
        fh.write("dataset,family,mape,spearman\n")
        for name, modes in DATASETS.items():
            model = fit_platform_model(ch.records, ch.events, FitConfig(timestamps=False, u_stat_modes=modes))
            res = evaluate_networks(nets, device, model, families=("statistical", "mixed"), seed=3)
            for a in res.aggregates.values():
                fh.write(f"{name},{a.family},{a.mape:.4f},{a.spearman:.6f}\n")
                print(f"{name:14s} {a.family:12s} MAPE {a.mape:6.2f}%  rho {a.spearman:.4f}")


if __name__ == "__main__":
    main()
