"""Build yes and no guided instances from one circuit family and verify both.

    python3 scripts/end_to_end.py --rounds 3 --workdir /tmp/e2e
"""
import argparse
from pathlib import Path

from stoqforge.circuit import acceptance_probability, amplify, parse_circuit
from stoqforge.hamiltonian import PerturbationConfig, build_guided_instance, save_instance
from stoqforge.numerics import verify_instance

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--circuit", default=str(HERE / "data" / "gated_coins.crqvc"))
    ap.add_argument("--rounds", type=int, default=1, help="majority rounds before compiling")
    ap.add_argument("--pre-idle", type=int, default=2)
    ap.add_argument("--Q", type=int, default=1)
    ap.add_argument("--f", type=int, default=2)
    ap.add_argument("--workdir", default="e2e")
    args = ap.parse_args()

    c = amplify(parse_circuit(Path(args.circuit).read_text()), args.rounds)
    out = Path(args.workdir)
    out.mkdir(parents=True, exist_ok=True)
    K = c.K + args.pre_idle
    cfg = PerturbationConfig.for_clock(K, f=args.f)
    for x in ("1", "0"):
        g = build_guided_instance(c, x, args.pre_idle, args.Q, cfg)
        save_instance(g, out / f"x{x}.json")
        v = verify_instance(g, out / f"x{x}_verdict.json")
        side = v["claims"]["energy_side"]
        print(f"x={x} Pr[accept]={acceptance_probability(c, x)} expected={g.expected} "
              f"lambda0={side['lambda0']:.4e} a={g.a:.4e} b={g.b:.4e} "
              f"overlap={v['claims']['overlap']['value']:.4f} >= delta={g.delta:.4f} -> {v['verdict']}")


if __name__ == "__main__":
    main()
