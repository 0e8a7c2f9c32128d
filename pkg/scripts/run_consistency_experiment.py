#!/usr/bin/env python3
"""Multi-seed paired-arm experiment: rank-alignment training vs. plain CE.

Trains both arms on the default synthetic config for each seed, measures
top-1 consistency, mean preference accuracy, and rank correlation on a
held-out split, and writes a summary CSV next to a printed table.
"""

import argparse
import csv
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from xconsist.toytrain import ToyRunConfig, TrainConfig, run_paired_arms  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--steps", type=int, default=None, help="override training steps")
    parser.add_argument("--out", default="experiments/consistency_arms.csv")
    args = parser.parse_args()

    rows = []
    for seed in range(args.seeds):
        train_cfg = TrainConfig(seed=seed)
        if args.steps is not None:
            train_cfg = TrainConfig(seed=seed, steps=args.steps)
        treated, baseline = run_paired_arms(ToyRunConfig(train=train_cfg))
        t, b = treated.outcome, baseline.outcome
        rows.append({
            "seed": seed,
            "baseline_c1": b.c1,
            "treated_c1": t.c1,
            "c1_gain": t.c1 - b.c1,
            "baseline_pref": b.preference_accuracy,
            "treated_pref": t.preference_accuracy,
            "pref_delta": t.preference_accuracy - b.preference_accuracy,
            "baseline_rho": b.rho,
            "treated_rho": t.rho,
        })
        r = rows[-1]
        print(f"seed {seed}: c1 {r['baseline_c1']:.3f} -> {r['treated_c1']:.3f} "
              f"({r['c1_gain']:+.3f}), pref {r['pref_delta']:+.4f}, "
              f"rho {r['baseline_rho']:.3f} -> {r['treated_rho']:.3f}")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    gains = [r["c1_gain"] for r in rows]
    print(f"\nmean c1 gain: {sum(gains) / len(gains):+.3f}  (summary: {out})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
