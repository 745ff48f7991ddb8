"""Independent oracles shared by the test modules.

Nothing here calls into the package's simulators: circuits are run on dense
statevectors by permuting entries bit list by bit list, and the clock
Hamiltonian is rebuilt entry by entry from its defining projectors.
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from stoqforge.circuit import Basis, Circuit, Gate, GateKind

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

PLUS = np.array([1.0, 1.0]) / np.sqrt(2)


def bits_of(i: int, width: int) -> list[int]:
    return [(i >> j) & 1 for j in range(width)]


def index_of(bits) -> int:
    return sum(b << j for j, b in enumerate(bits))


def gate_on_bits(g: Gate, bits: list[int]) -> list[int]:
    out = list(bits)
    if g.kind is GateKind.X:
        out[g.targets[0]] ^= 1
    elif g.kind is GateKind.CNOT:
        c, t = g.targets
        out[t] ^= bits[c]
    elif g.kind is GateKind.TOFFOLI:
        a, b, t = g.targets
        out[t] ^= bits[a] & bits[b]
    return out


def unitary(gates, width: int) -> np.ndarray:
    dim = 2**width
    U = np.eye(dim)
    for g in gates:
        P = np.zeros((dim, dim))
        for i in range(dim):
            P[index_of(gate_on_bits(g, bits_of(i, width))), i] = 1.0
        U = P @ U
    return U


def initial_vector(c: Circuit, x: str) -> np.ndarray:
    vec = np.ones(1)
    factors = [np.eye(2)[int(b)] for b in x] + [np.eye(2)[0]] * c.m + [PLUS] * c.p
    for f in factors:
        vec = np.kron(f, vec)  # later qubits are more significant
    return vec


def apply_gates(gates, psi: np.ndarray, width: int) -> np.ndarray:
    """Apply basis permutations to a statevector one index at a time."""
    for g in gates:
        out = np.zeros_like(psi)
        for i in range(len(psi)):
            out[index_of(gate_on_bits(g, bits_of(i, width)))] = psi[i]
        psi = out
    return psi


def statevector_accept(c: Circuit, x: str) -> float:
    """Acceptance probability from a full statevector simulation."""
    w = c.width
    psi = apply_gates(c.gates, initial_vector(c, x), w)
    if c.output_basis is Basis.Z:
        return float(sum(abs(psi[i]) ** 2 for i in range(2**w) if bits_of(i, w)[c.output_qubit]))
    if c.output_basis is Basis.X:
        flipped = apply_gates([Gate(GateKind.X, (c.output_qubit,))], psi, w)
        return float(0.5 + 0.5 * np.real(np.vdot(psi, flipped)))
    want = [int(b) for b in x] + [0] * c.m
    return float(sum(abs(psi[i]) ** 2 for i in range(2**w) if bits_of(i, w)[: c.n + c.m] == want))


def clock_hamiltonian_oracle(c: Circuit, x: str) -> np.ndarray:
    """The clock Hamiltonian written entry by entry from its projectors (c already pre-idled)."""
    w, K = c.width, c.K
    n_total = w + K
    dim = 2**n_total
    H = np.zeros((dim, dim))
    for i in range(dim):
        b = bits_of(i, n_total)
        sys, clk = b[:w], b[w:]
        # input penalties at c_1 = 0
        if clk[0] == 0:
            for j in range(c.n):
                H[i, i] += sys[j] != int(x[j])
            for j in range(c.n, c.n + c.m):
                H[i, i] += sys[j]
        # clock legality: forbid 0 followed by 1
        for t in range(K - 1):
            H[i, i] += clk[t] == 0 and clk[t + 1] == 1
        for t, g in enumerate(c.gates, 1):
            lo, hi = max(t - 2, 0), min(t + 1, K)
            window = clk[lo:hi]
            before = [1] * (t - 1 - lo) + [0] + [0] * (hi - t)
            after = [1] * (t - lo) + [0] * (hi - t)
            if window in (before, after):
                H[i, i] += 1.0
            if window == before:
                nb = gate_on_bits(g, sys) if g.support else sys
                nclk = clk[:lo] + after + clk[hi:]
                j = index_of(nb + nclk)
                H[j, i] -= 1.0
                H[i, j] -= 1.0
    # |-><-| on plus ancillae at c_1 = 0, off-diagonal in the system register
    for j in range(c.n + c.m, w):
        for i in range(dim):
            b = bits_of(i, n_total)
            if b[w] == 0:
                H[i, i] += 0.5
                H[i ^ (1 << j), i] -= 0.5
    return H


def history_oracle(c: Circuit, x: str, upto: int | None = None) -> np.ndarray:
    """(1/sqrt(T+1)) sum_t U_t...U_1 |x 0 +>|1^t 0^(K-t)> as a dense vector."""
    w, K = c.width, c.K
    T = K if upto is None else upto
    vec = np.zeros(2 ** (w + K))
    phi = initial_vector(c, x)
    for t in range(T + 1):
        if t:
            phi = unitary([c.gates[t - 1]], w) @ phi
        clock = np.zeros(2**K)
        clock[index_of([1] * t + [0] * (K - t))] = 1.0
        vec += np.kron(clock, phi)
    return vec / np.sqrt(T + 1)


@st.composite
def circuits(draw, max_width=4, max_gates=6, basis=Basis.Z, min_n=0, kinds=("X", "CNOT", "TOFFOLI")):
    width = draw(st.integers(max(1, min_n), max_width))
    n = draw(st.integers(min_n, width))
    m = draw(st.integers(0, width - n))
    p = width - n - m
    arity = {"X": 1, "CNOT": 2, "TOFFOLI": 3}
    usable = [k for k in kinds if arity[k] <= width]
    K = draw(st.integers(1, max_gates))
    gates = []
    for _ in range(K):
        kind = draw(st.sampled_from(usable))
        qs = draw(st.permutations(range(width)))[: arity[kind]]
        gates.append(Gate(GateKind[kind], tuple(qs)))
    return Circuit(n, m, p, tuple(gates), basis)


@st.composite
def circuit_and_input(draw, **kw):
    c = draw(circuits(**kw))
    x = draw(st.text("01", min_size=c.n, max_size=c.n))
    return c, x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
