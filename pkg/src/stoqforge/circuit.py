"""Classically reversible verification circuits (CRQVCs).

A circuit acts on ``n`` input qubits, ``m`` ancillae prepared in ``|0>`` and
``p`` ancillae prepared in ``|+>``, in that order. Qubit ``q`` is bit ``q`` of
an integer basis label. Every gate is a permutation of computational basis
states, so acceptance statistics follow from pushing the ``2**p`` equally
weighted ``|+>`` branches through the gate list and counting.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import comb
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CAP_QUBITS = 24


class CircuitError(ValueError):
    """Raised for malformed circuits or circuit files."""


class EmptyCircuit(CircuitError):
    pass


class DuplicateTarget(CircuitError):
    pass


class WidthError(CircuitError):
    """Gate index outside the register, or register beyond the desk cap."""


class BasisMismatch(CircuitError):
    pass


class GateKind(enum.Enum):
    X = "X"
    CNOT = "CNOT"
    TOFFOLI = "TOFFOLI"
    IDENTITY = "ID"


_ARITY = {GateKind.X: 1, GateKind.CNOT: 2, GateKind.TOFFOLI: 3, GateKind.IDENTITY: 1}


class Basis(enum.Enum):
    Z = "Z"  # accept iff output qubit reads 1
    X = "X"  # accept iff output qubit reads +
    REG = "R"  # accept iff the first n+m qubits read x 0^m (output of omega_transform)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    targets: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(self.targets) != _ARITY[self.kind]:
            raise CircuitError(f"{self.kind.value} takes {_ARITY[self.kind]} qubit(s), got {len(self.targets)}")
        if len(set(self.targets)) != len(self.targets):
            raise DuplicateTarget(f"repeated qubit in {self.kind.value} {self.targets}")
        if min(self.targets) < 0:
            raise WidthError(f"negative qubit index in {self.targets}")

    @property
    def target(self) -> int:
        return self.targets[-1]

    @property
    def controls(self) -> tuple[int, ...]:
        return self.targets[:-1] if self.kind is not GateKind.IDENTITY else ()

    @property
    def support(self) -> tuple[int, ...]:
        """Qubits the gate acts on non-trivially (empty for IDENTITY)."""
        return () if self.kind is GateKind.IDENTITY else self.targets

    def apply(self, states):
        """Apply to an int or an integer numpy array of basis labels."""
        if self.kind is GateKind.IDENTITY:
            return states
        flip = 1
        for c in self.controls:
            flip = flip & (states >> c)
        return states ^ ((flip & 1) << self.target)

    def matrix(self) -> np.ndarray:
        """Local permutation matrix on ``targets`` (first listed qubit = low bit)."""
        k = len(self.targets)
        out = np.zeros((2**k, 2**k))
        local = Gate(self.kind, tuple(range(k)))
        for col in range(2**k):
            out[local.apply(col), col] = 1.0
        return out

    def remap(self, mapping) -> "Gate":
        return Gate(self.kind, tuple(mapping[t] for t in self.targets))

    def __str__(self):
        return " ".join([self.kind.value, *map(str, self.targets)])


def X(t: int) -> Gate:
    return Gate(GateKind.X, (t,))


def CNOT(c: int, t: int) -> Gate:
    return Gate(GateKind.CNOT, (c, t))


def TOFFOLI(c1: int, c2: int, t: int) -> Gate:
    return Gate(GateKind.TOFFOLI, (c1, c2, t))


def ID(t: int) -> Gate:
    return Gate(GateKind.IDENTITY, (t,))


@dataclass(frozen=True)
class Circuit:
    n: int
    m: int
    p: int
    gates: tuple[Gate, ...]
    output_basis: Basis = Basis.Z
    output_qubit: int = 0
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if min(self.n, self.m, self.p) < 0:
            raise CircuitError("register sizes must be non-negative")
        if self.width == 0:
            raise WidthError("circuit has no qubits")
        if not self.gates:
            raise EmptyCircuit("circuit has no gates")
        for g in self.gates:
            if max(g.targets) >= self.width:
                raise WidthError(f"gate {g} outside width {self.width}")
        if not 0 <= self.output_qubit < self.width:
            raise WidthError(f"output qubit {self.output_qubit} outside width {self.width}")

    @property
    def width(self) -> int:
        return self.n + self.m + self.p

    @property
    def K(self) -> int:
        return len(self.gates)

    @property
    def plus_qubits(self) -> range:
        return range(self.n + self.m, self.width)

    def initial_label(self, x: str) -> int:
        """Basis label of |x, 0^m, 0^p> (the |+> register set to all zeros)."""
        if len(x) != self.n or set(x) - {"0", "1"}:
            raise CircuitError(f"input {x!r} is not a {self.n}-bit string")
        return bits_to_int(x)

    def run(self, states):
        for g in self.gates:
            states = g.apply(states)
        return states

    def branches(self, x: str, cap_qubits: int = DEFAULT_CAP_QUBITS) -> np.ndarray:
        """Final basis labels of all 2**p branches of |x, 0^m, +^p>, indexed by the coin string."""
        check_cap(self.width, cap_qubits)
        coins = np.arange(2**self.p, dtype=np.int64) << (self.n + self.m)
        return self.run(coins | self.initial_label(x))

    def clean_prefix_length(self) -> int:
        """Number of leading gates that leave every |+> ancilla untouched."""
        plus = set(self.plus_qubits)
        for k, g in enumerate(self.gates):
            if plus.intersection(g.support):
                return k
        return self.K


def check_cap(width: int, cap_qubits: int):
    if width > cap_qubits:
        raise WidthError(f"{width} qubits exceeds the desk-scale cap of {cap_qubits}")


def bits_to_int(bits: str) -> int:
    """Character j of ``bits`` is qubit j (bit j of the label)."""
    return sum(1 << j for j, b in enumerate(bits) if b == "1")


def int_to_bits(label: int, width: int) -> str:
    return "".join("1" if (label >> j) & 1 else "0" for j in range(width))


def acceptance_probability(c: Circuit, x: str, cap_qubits: int = DEFAULT_CAP_QUBITS) -> Fraction:
    """Exact acceptance probability of ``c`` on input ``x``."""
    final = c.branches(x, cap_qubits)
    total = len(final)
    if c.output_basis is Basis.Z:
        hits = int(np.count_nonzero((final >> c.output_qubit) & 1))
        return Fraction(hits, total)
    if c.output_basis is Basis.X:
        # <phi|U^dag X U|phi> counts ordered branch pairs (r, r') with X U|r> = U|r'>.
        flipped = final ^ (1 << c.output_qubit)
        pairs = int(np.count_nonzero(np.isin(flipped, final, assume_unique=True)))
        return Fraction(1, 2) + Fraction(pairs, 2 * total)
    register = (1 << (c.n + c.m)) - 1
    hits = int(np.count_nonzero((final & register) == c.initial_label(x)))
    return Fraction(hits, total)


def pre_idle(c: Circuit, N: int) -> Circuit:
    if N < 0:
        raise CircuitError("pre-idle count must be non-negative")
    if N == 0:
        return c
    return replace(c, gates=(ID(c.output_qubit),) * N + c.gates)


def omega_transform(c: Circuit) -> Circuit:
    """V^dag X_out V, accepted when the first n+m qubits return to x 0^m."""
    if c.output_basis is not Basis.X:
        raise BasisMismatch("omega_transform needs an X-basis output circuit")
    gates = c.gates + (X(c.output_qubit),) + tuple(reversed(c.gates))
    return replace(c, gates=gates, output_basis=Basis.REG)


def majority_probability(p: Fraction | float, rounds: int):
    """Probability that the majority of ``rounds`` independent p-coins is 1."""
    return sum(comb(rounds, k) * p**k * (1 - p) ** (rounds - k) for k in range(rounds // 2 + 1, rounds + 1))


def amplify(c: Circuit, f_rounds: int, cap_qubits: int = DEFAULT_CAP_QUBITS) -> Circuit:
    """Run ``f_rounds`` disjoint copies of ``c`` and write their majority onto qubit 0.

    Layout of the result: the n shared inputs, then zero ancillae (a result
    qubit when n == 0, one input+zero register per copy, then counter
    scratch), then one |+> register per copy. Each copy receives x by CNOTs;
    qubit 0 is then cleared against copy 0 and receives the majority. Three
    rounds use the XOR of pairwise Toffolis; larger counts use a one-hot
    counter advanced by controlled swaps.
    """
    if f_rounds < 1 or f_rounds % 2 == 0:
        raise CircuitError("f_rounds must be a positive odd integer")
    if c.output_basis is not Basis.Z:
        raise BasisMismatch("amplify needs a Z-basis circuit")
    if f_rounds == 1:
        return c
    n, reg = c.n, c.n + c.m
    result_slot = 1 if n == 0 else 0
    scratch = 0 if f_rounds == 3 else f_rounds + 1
    m_new = result_slot + f_rounds * reg + scratch
    p_new = f_rounds * c.p
    check_cap(n + m_new + p_new, cap_qubits)

    def copy_map(r):
        base = n + result_slot + r * reg
        plus_base = n + m_new + r * c.p
        return [base + q if q < reg else plus_base + (q - reg) for q in range(c.width)]

    maps = [copy_map(r) for r in range(f_rounds)]
    gates: list[Gate] = []
    for mp in maps:
        gates += [CNOT(i, mp[i]) for i in range(n)]
    if n:
        gates.append(CNOT(maps[0][0], 0))
    for mp in maps:
        gates += [g.remap(mp) for g in c.gates]
    outs = [mp[c.output_qubit] for mp in maps]
    if f_rounds == 3:
        a, b, d = outs
        gates += [TOFFOLI(a, b, 0), TOFFOLI(a, d, 0), TOFFOLI(b, d, 0)]
        gadget = "xor of pairwise Toffolis"
    else:
        u = list(range(n + result_slot + f_rounds * reg, n + m_new))
        gates.append(X(u[0]))
        for o in outs:
            for j in range(f_rounds, 0, -1):
                # controlled swap of u[j-1], u[j] on o
                gates += [CNOT(u[j], u[j - 1]), TOFFOLI(o, u[j - 1], u[j]), CNOT(u[j], u[j - 1])]
        gates += [CNOT(u[j], 0) for j in range(f_rounds // 2 + 1, f_rounds + 1)]
        gadget = f"one-hot counter, {scratch} scratch qubits"
    return Circuit(n, m_new, p_new, tuple(gates), Basis.Z, 0,
                   notes=(f"amplified x{f_rounds}", f"majority gadget: {gadget}"))


# --- file format -------------------------------------------------------------

_HEADER = re.compile(r"^\s*n\s*=\s*(\d+)\s+m\s*=\s*(\d+)\s+p\s*=\s*(\d+)(?:\s+basis\s*=\s*([ZXR]))?(?:\s+out\s*=\s*(\d+))?\s*$")
_TOKENS = {"X": GateKind.X, "CNOT": GateKind.CNOT, "TOFFOLI": GateKind.TOFFOLI, "ID": GateKind.IDENTITY}


def parse_circuit(text: str) -> Circuit:
    header = None
    gates: list[Gate] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            match = _HEADER.match(line)
            if not match:
                raise CircuitError(f"line {lineno}: expected header 'n=<int> m=<int> p=<int> basis=<Z|X>'")
            header = match.groups()
            continue
        kind, *args = line.split()
        if kind.upper() not in _TOKENS:
            raise CircuitError(f"line {lineno}: unknown gate {kind!r}")
        try:
            targets = tuple(int(a) for a in args)
        except ValueError:
            raise CircuitError(f"line {lineno}: qubit indices must be integers") from None
        try:
            gates.append(Gate(_TOKENS[kind.upper()], targets))
        except CircuitError as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
    if header is None:
        raise CircuitError("missing header line")
    n, m, p, basis, out = header
    return Circuit(int(n), int(m), int(p), tuple(gates), Basis(basis or "Z"), int(out or 0))


def format_circuit(c: Circuit) -> str:
    lines = [f"# {note}" for note in c.notes]
    header = f"n={c.n} m={c.m} p={c.p} basis={c.output_basis.value}"
    if c.output_qubit:
        header += f" out={c.output_qubit}"
    lines.append(header)
    lines += [str(g) for g in c.gates]
    return "\n".join(lines) + "\n"


def random_circuit(rng: np.random.Generator, n: int, m: int, p: int, K: int,
                   kinds: Sequence[GateKind] = (GateKind.X, GateKind.CNOT, GateKind.TOFFOLI),
                   basis: Basis = Basis.Z) -> Circuit:
    width = n + m + p
    kinds = [k for k in kinds if _ARITY[k] <= width]
    gates = []
    for _ in range(K):
        kind = kinds[rng.integers(len(kinds))]
        gates.append(Gate(kind, tuple(int(q) for q in rng.choice(width, _ARITY[kind], replace=False))))
    return Circuit(n, m, p, tuple(gates), basis)


def gates_from(entries: Iterable[tuple]) -> tuple[Gate, ...]:
    """``[("CNOT", 1, 0), ("X", 2)]`` -> gate tuple."""
    return tuple(Gate(_TOKENS[name], tuple(args)) for name, *args in entries)
