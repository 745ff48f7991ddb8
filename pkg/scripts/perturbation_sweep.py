"""Sweep Delta over multiples of 112 K^3 and fit the slack constant C.

    python3 scripts/perturbation_sweep.py --random 8 --seed 3
    python3 scripts/perturbation_sweep.py --circuit scripts/data/gated_coins.crqvc --input 0 --pre-idle 2
"""
import argparse
import json

import numpy as np

from stoqforge.circuit import parse_circuit, random_circuit
from stoqforge.numerics import fit_slack, perturbation_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--circuit")
    ap.add_argument("--input", default="")
    ap.add_argument("--pre-idle", type=int, default=0)
    ap.add_argument("--random", type=int, default=0, help="number of random circuits (width <= 3, K_hat <= 6)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--multipliers", type=float, nargs="+", default=[1, 2, 4])
    ap.add_argument("--out-form", choices=("last_clock", "projector"), default="last_clock")
    ap.add_argument("--json", help="write all rows here")
    args = ap.parse_args()

    jobs = []
    if args.circuit:
        with open(args.circuit) as fh:
            jobs.append((parse_circuit(fh.read()), args.input, args.pre_idle))
    rng = np.random.default_rng(args.seed)
    for _ in range(args.random):
        width = int(rng.integers(1, 4))
        n = int(rng.integers(1, width + 1))
        m = int(rng.integers(0, width - n + 1))
        c = random_circuit(rng, n, m, width - n - m, int(rng.integers(1, 5)))
        jobs.append((c, "".join(rng.choice(["0", "1"], n)), int(rng.integers(0, 3))))
    if not jobs:
        ap.error("give --circuit or --random")

    records = []
    print(f"{'K_hat':>5} {'Delta':>10} {'lambda0':>12} {'target':>12} {'Delta*err':>10} {'||xi-eta||':>11}")
    for c, x, N in jobs:
        rows = perturbation_sweep(c, x, N, tuple(args.multipliers), out_form=args.out_form)
        for r in rows:
            print(f"{c.K + N:>5} {r['Delta']:>10.0f} {r['lambda0']:>12.5e} {r['target']:>12.5e} "
                  f"{r['Delta'] * r['error']:>10.4f} {r['xi_eta_distance']:>11.3e}")
        records.append({"gates": [str(g) for g in c.gates], "input": x, "pre_idle": N, "rows": rows,
                        "slack": fit_slack(rows)})
    worst = max(r["slack"] for r in records)
    print(f"fitted slack C = {worst:.4f} over {len(records)} circuit(s)")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(records, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
