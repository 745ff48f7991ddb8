"""Spectral gap of compiled Hamiltonians against the 1/(7 K^3) bound, as K_hat grows through pre-idling."""
import argparse

import numpy as np

from stoqforge.circuit import random_circuit
from stoqforge.hamiltonian import compile_circuit
from stoqforge.numerics import ground_state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--width", type=int, default=3)
    ap.add_argument("--gates", type=int, default=3)
    ap.add_argument("--max-pre-idle", type=int, default=6)
    ap.add_argument("--trials", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"{'K_hat':>5} {'dim':>7} {'min gap':>10} {'1/(7K^3)':>10} {'method':>13}")
    circuits = [random_circuit(rng, 1, args.width - 1, 0, args.gates) for _ in range(args.trials)]
    for N in range(args.max_pre_idle + 1):
        K = args.gates + N
        gaps, method = [], ""
        for c in circuits:
            rep = ground_state(compile_circuit(c, "1", N), k=2)
            gaps.append(rep.gap)
            method = rep.method
        print(f"{K:>5} {2 ** (args.width + K):>7} {min(gaps):>10.4e} {1 / (7 * K**3):>10.4e} {method:>13}")


if __name__ == "__main__":
    main()
