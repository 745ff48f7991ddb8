"""``stoqforge`` command-line front end.

Exit codes: 0 on success or a PASS verdict, 2 on a FAIL verdict, 1 on any
error (bad flags, missing files, schema violations, cap overflows).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import acceptance_probability, amplify, format_circuit, parse_circuit
from .hamiltonian import (PerturbationConfig, build_guided_instance, compile_circuit, format_hamiltonian,
                          is_stoquastic, load_instance, locality, parse_hamiltonian, pin_embed, save_instance,
                          solve_diagonal)
from .numerics import ground_state, perron_frobenius_ok, verify_instance
from .subsetstate import parse_state, sample


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"missing file: {path}")
    return p.read_text(encoding="utf-8")


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(args, inputs: list[str], started: float) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    manifest = {"command": args.command, "config": config, "inputs": {p: _digest(p) for p in inputs},
                "seed": args.seed, "version": __version__}
    if args.record_time:
        manifest["wall_time"] = time.time() - started
    return manifest


def _emit(args, report: dict, inputs: list[str], started: float, out: str | None = None):
    report = dict(report, manifest=_manifest(args, inputs, started))
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    if args.format == "json":
        sys.stdout.write(text)
    else:
        for key, value in sorted(report.items()):
            if key != "manifest":
                print(f"{key}: {value}")


def cmd_accept(args, started):
    c = parse_circuit(_read(args.circuit))
    p = acceptance_probability(c, args.input, args.cap_qubits)
    report = {"p_accept": float(p), "p_accept_exact": str(p), "basis": c.output_basis.value, "width": c.width}
    _emit(args, report, [args.circuit], started, args.out)
    return 0


def cmd_amplify(args, started):
    c = parse_circuit(_read(args.circuit))
    amp = amplify(c, args.rounds, args.cap_qubits)
    if not args.out:
        raise UsageError("amplify needs --out")
    Path(args.out).write_text(format_circuit(amp))
    _emit(args, {"written": args.out, "width": amp.width, "gates": amp.K, "notes": list(amp.notes)},
          [args.circuit], started, args.report)
    return 0


def cmd_compile(args, started):
    c = parse_circuit(_read(args.circuit))
    h = compile_circuit(c, args.input, args.pre_idle, args.cap_qubits)
    if not args.out:
        raise UsageError("compile needs --out")
    Path(args.out).write_text(format_hamiltonian(h))
    stoq, _ = is_stoquastic(h, args.tol, args.cap_qubits)
    report = {"written": args.out, "n_total": h.n_total, "terms": len(h.terms), "locality": locality(h),
              "stoquastic": stoq, "K_hat": h.meta["K_hat"]}
    _emit(args, report, [args.circuit], started, args.report)
    return 0


def cmd_guide(args, started):
    c = parse_circuit(_read(args.circuit))
    K = c.K + args.pre_idle
    cfg = PerturbationConfig.for_clock(K, args.delta_mult, f=args.f, slack=args.slack, out_form=args.out_form)
    inst = build_guided_instance(c, args.input, args.pre_idle, args.Q, cfg, epsilon=args.epsilon,
                                 encoding=args.encoding, budget=args.budget, cap_qubits=args.cap_qubits)
    if not args.out:
        raise UsageError("guide needs --out")
    record = save_instance(inst, args.out)
    _emit(args, {"written": args.out, "instance": record}, [args.circuit], started, args.report)
    return 0


def cmd_pin(args, started):
    h2 = parse_hamiltonian(_read(args.ham))
    pinned, q = pin_embed(h2)
    if not args.out:
        raise UsageError("pin needs --out")
    Path(args.out).write_text(format_hamiltonian(pinned))
    stoq, _ = is_stoquastic(pinned, args.tol, args.cap_qubits)
    report = {"written": args.out, "pinned_qubit": q, "pinned_state": "-", "locality": locality(pinned),
              "stoquastic": stoq}
    _emit(args, report, [args.ham], started, args.report)
    return 0


def cmd_solve_diag(args, started):
    h = parse_hamiltonian(_read(args.ham))
    s = parse_state(_read(args.subset))
    energy, best = solve_diagonal(h, s)
    _emit(args, {"min_energy": energy, "argmin": best, "members": s.size}, [args.ham, args.subset], started, args.out)
    return 0


def cmd_sample(args, started):
    s = parse_state(_read(args.state))
    counts = sample(s, args.shots, args.seed)
    report = {"shots": args.shots, "counts": dict(sorted(counts.items())), "M": s.M}
    _emit(args, report, [args.state], started, args.out)
    return 0


def cmd_spectrum(args, started):
    h = parse_hamiltonian(_read(args.ham))
    rep = ground_state(h, k=args.k, cap_qubits=args.cap_qubits)
    report = dict(rep.summary(), perron_frobenius=perron_frobenius_ok(rep.ground_vector),
                  n_total=h.n_total)
    _emit(args, report, [args.ham], started, args.out)
    return 0


def cmd_verify(args, started):
    _read(args.instance)
    inst = load_instance(args.instance)
    verdict = verify_instance(inst, energy_tol=args.tol, overlap_tol=args.tol, stoq_tol=args.tol,
                              cap_qubits=args.cap_qubits)
    _emit(args, verdict, [args.instance], started, args.out)
    return 0 if verdict["verdict"] == "PASS" else 2


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice (default 0)")
    common.add_argument("--cap-qubits", type=int, default=24, help="desk-scale qubit cap (default 24)")
    common.add_argument("--tol", type=float, default=1e-12, help="comparison tolerance (default 1e-12)")
    common.add_argument("--out", help="output path")
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    common.add_argument("--record-time", action="store_true", help="add wall time to the manifest")

    parser = _Parser(prog="stoqforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    p = add("accept", cmd_accept, "exact acceptance probability of a circuit")
    p.add_argument("--circuit", required=True)
    p.add_argument("--input", required=True)

    p = add("amplify", cmd_amplify, "majority-vote amplification")
    p.add_argument("--circuit", required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--report")

    p = add("compile", cmd_compile, "compile a circuit to the clock Hamiltonian")
    p.add_argument("--circuit", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--pre-idle", type=int, default=0)
    p.add_argument("--report")

    p = add("guide", cmd_guide, "build a guided instance (Hamiltonian, guide, thresholds)")
    p.add_argument("--circuit", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--pre-idle", type=int, default=0)
    p.add_argument("--Q", type=int, required=True, help="truncation time of the guiding history")
    p.add_argument("--delta-mult", type=float, default=1.0, help="Delta in units of 112 K^3")
    p.add_argument("--f", type=int, default=2, help="error exponent: statistics 1-2^-f / 2^-f")
    p.add_argument("--slack", type=float, default=1.0, help="C in the C/Delta eigenvalue envelope")
    p.add_argument("--out-form", choices=("last_clock", "projector"), default="last_clock")
    p.add_argument("--epsilon", type=float, help="declared bound on ||xi - eta|| (measured if omitted)")
    p.add_argument("--encoding", choices=("isometry", "expand"), default="isometry")
    p.add_argument("--budget", type=float, default=1e-9, help="required b - a")
    p.add_argument("--report")

    p = add("pin", cmd_pin, "embed a {X,Z,XX,ZZ} Hamiltonian with a pinned auxiliary qubit")
    p.add_argument("--ham", required=True)
    p.add_argument("--report")

    p = add("solve-diag", cmd_solve_diag, "minimise a diagonal Hamiltonian over a subset")
    p.add_argument("--ham", required=True)
    p.add_argument("--subset", required=True)

    p = add("sample", cmd_sample, "sample bit strings from a subset state")
    p.add_argument("--state", required=True)
    p.add_argument("--shots", type=int, default=1000)

    p = add("spectrum", cmd_spectrum, "lowest eigenpairs of a Hamiltonian")
    p.add_argument("--ham", required=True)
    p.add_argument("--k", type=int, default=2)

    p = add("verify", cmd_verify, "check every promise of a guided instance")
    p.add_argument("--instance", required=True)
    return parser


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from --config, so explicit flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return parser.parse_args(argv)
    try:
        defaults = json.loads(_read(known.config))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{known.config}: not valid JSON ({exc})") from None
    if not isinstance(defaults, dict):
        raise UsageError(f"{known.config}: config must be a JSON object")
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if command is None:
        return parser.parse_args(argv)
    actions = {a.dest: a for a in choices[command]._actions}
    unknown = set(defaults) - set(actions) - {"config"}
    if unknown:
        raise UsageError(f"{known.config}: unknown keys {sorted(unknown)}")
    for key, value in defaults.items():
        actions[key].default = value
        actions[key].required = False
    return parser.parse_args(argv)


def run(argv=None) -> int:
    started = time.time()
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        threads = os.environ.get("STOQFORGE_THREADS")
        if threads:
            from threadpoolctl import threadpool_limits

            threadpool_limits(limits=int(threads))
        np.seterr(all="ignore")
        return args.func(args, started)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
