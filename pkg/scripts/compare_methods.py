"""Final validation accuracy of every selector on a Gaussian mixture, over several seeds.

    python scripts/compare_methods.py --seeds 10 --separation 5 --out results/compare.csv
"""

import argparse
import csv
import time

import numpy as np

from modesel.dataset import split_pool_val
from modesel.selection import METHODS, RunConfig, run_method
from modesel.synthetic import gaussian_mixture


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--imbalance", type=float, default=1.0)
    p.add_argument("--budget", type=float, default=0.3)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--out")
    args = p.parse_args()

    methods = args.methods.split(",")
    acc = {m: [] for m in methods}
    rows = []
    for seed in range(args.seeds):
        data = gaussian_mixture(args.n, args.classes, args.dim, args.separation, args.imbalance, seed)
        split = split_pool_val(data, 0.1, seed)
        cfg = RunConfig(budget=args.budget, seed=seed, lr=args.lr)
        for m in methods:
            t0 = time.perf_counter()
            run = run_method(m, cfg, data, split)
            acc[m].append(100 * run.final_val_accuracy)
            rows.append([seed, m, run.final_val_accuracy, time.perf_counter() - t0])
        print(f"seed {seed}: " + "  ".join(f"{m} {acc[m][-1]:.1f}" for m in methods), flush=True)

    ref = np.mean(acc["random"]) if "random" in acc else None
    print(f"\n{'method':16s} {'mean':>7s} {'std':>6s} {'vs random':>10s}")
    for m in methods:
        a = np.asarray(acc[m])
        std = a.std(ddof=1) if a.size > 1 else 0.0
        delta = f"{a.mean() - ref:+.2f}" if ref is not None else "n/a"
        print(f"{m:16s} {a.mean():7.2f} {std:6.2f} {delta:>10s}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "method", "val_accuracy", "seconds"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
