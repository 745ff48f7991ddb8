"""Local Hamiltonians and the circuit-to-Hamiltonian compiler.

A Hamiltonian is a list of local terms, each a small dense matrix on an
ordered tuple of qubits. Local matrices use the global bit convention: the
first listed qubit is the least significant bit of the local index.

The compiler emits the unary-clock construction on ``w + K`` qubits (system
register first, clock qubit ``c_t`` at index ``w + t - 1``) with
``|t> = |1^t 0^(K-t)>``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .circuit import (DEFAULT_CAP_QUBITS, Basis, BasisMismatch, Circuit, acceptance_probability, bits_to_int,
                      check_cap, int_to_bits, pre_idle)
from .subsetstate import HADAMARD, IDENTITY, SubsetState, build_history_subset

MAX_ARITY = 6
HERMITIAN_TOL = 1e-12
STOQ_TOL = 1e-12
LABELS = ("IN", "CLOCK", "PROP", "OUT", "PIN", "USER")


class HamiltonianError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LocalTerm:
    qubits: tuple[int, ...]
    matrix: np.ndarray
    label: str = "USER"

    def __post_init__(self):
        qubits = tuple(int(q) for q in self.qubits)
        mat = np.array(self.matrix)
        if not np.iscomplexobj(mat):
            mat = mat.astype(float)
        if len(set(qubits)) != len(qubits):
            raise HamiltonianError(f"repeated qubit in term {qubits}")
        if len(qubits) > MAX_ARITY:
            raise HamiltonianError(f"term on {len(qubits)} qubits exceeds arity {MAX_ARITY}")
        if mat.shape != (2 ** len(qubits),) * 2:
            raise HamiltonianError(f"matrix shape {mat.shape} does not fit {len(qubits)} qubit(s)")
        if not np.allclose(mat, mat.conj().T, atol=HERMITIAN_TOL, rtol=0):
            raise HamiltonianError(f"term {self.label} on {qubits} is not Hermitian")
        if self.label.split("_")[0] not in LABELS:
            raise HamiltonianError(f"unknown term label {self.label!r}")
        mat.setflags(write=False)
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "matrix", mat)

    @property
    def arity(self) -> int:
        return len(self.qubits)

    @property
    def is_diagonal(self) -> bool:
        return not np.any(self.matrix - np.diag(np.diag(self.matrix)))

    def scaled(self, factor: float) -> "LocalTerm":
        return LocalTerm(self.qubits, factor * self.matrix, self.label)


@dataclass(frozen=True)
class Hamiltonian:
    n_total: int
    terms: tuple[LocalTerm, ...]
    norm_scale: float = 1.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.norm_scale <= 0:
            raise HamiltonianError("norm_scale must be positive")
        for t in self.terms:
            if t.qubits and max(t.qubits) >= self.n_total:
                raise HamiltonianError(f"term {t.label} on {t.qubits} outside {self.n_total} qubits")

    @property
    def dim(self) -> int:
        return 2**self.n_total

    @property
    def is_real(self) -> bool:
        return not any(np.iscomplexobj(t.matrix) and np.any(t.matrix.imag) for t in self.terms)

    def norm_bound(self) -> float:
        """Triangle-inequality bound on the operator norm, including norm_scale."""
        return self.norm_scale * sum(float(np.linalg.norm(t.matrix, 2)) for t in self.terms)


# --- assembly ----------------------------------------------------------------

def _deposit(values: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    out = np.zeros(len(values), dtype=np.int64)
    for j, pos in enumerate(positions):
        out |= ((values >> j) & 1) << pos
    return out


def _free_labels(n_total: int, qubits: Sequence[int]) -> np.ndarray:
    free = [q for q in range(n_total) if q not in set(qubits)]
    return _deposit(np.arange(2 ** len(free), dtype=np.int64), free)


def assemble(h: Hamiltonian, cap_qubits: int = DEFAULT_CAP_QUBITS, scaled: bool = True) -> sp.csr_matrix:
    """Global sparse matrix of ``h`` (times norm_scale unless ``scaled=False``)."""
    check_cap(h.n_total, cap_qubits)
    dtype = float if h.is_real else complex
    rows, cols, vals = [], [], []
    for t in h.terms:
        base = _free_labels(h.n_total, t.qubits)
        local = _deposit(np.arange(2**t.arity, dtype=np.int64), t.qubits)
        r_loc, c_loc = np.nonzero(t.matrix)
        for r, c in zip(r_loc, c_loc):
            rows.append(base | local[r])
            cols.append(base | local[c])
            vals.append(np.full(len(base), t.matrix[r, c].real if dtype is float else t.matrix[r, c]))
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(h.dim, h.dim), dtype=dtype).tocsr()
    mat.sum_duplicates()
    return mat * h.norm_scale if scaled else mat


def apply_sparse(h: Hamiltonian, labels: np.ndarray, amps: np.ndarray, scaled: bool = True):
    """H|psi> for a state given by basis labels and amplitudes; returns (labels, amps)."""
    labels = np.asarray(labels, dtype=np.int64)
    amps = np.asarray(amps, dtype=complex)
    out_l, out_a = [], []
    for t in h.terms:
        local_of = _deposit(np.arange(2**t.arity, dtype=np.int64), t.qubits)
        mask = int(local_of[-1]) if t.arity else 0
        loc = np.zeros(len(labels), dtype=np.int64)
        for j, q in enumerate(t.qubits):
            loc |= ((labels >> q) & 1) << j
        rest = labels & ~mask
        for r, c in zip(*np.nonzero(t.matrix)):
            hit = loc == c
            out_l.append(rest[hit] | local_of[r])
            out_a.append(amps[hit] * t.matrix[r, c])
    if not out_l:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
    lab = np.concatenate(out_l)
    amp = np.concatenate(out_a)
    uniq, inv = np.unique(lab, return_inverse=True)
    acc = np.zeros(len(uniq), dtype=complex)
    np.add.at(acc, inv, amp)
    if scaled:
        acc *= h.norm_scale
    return uniq, acc


def sparse_expectation(h: Hamiltonian, labels, amps, scaled: bool = True) -> complex:
    labels = np.asarray(labels, dtype=np.int64)
    amps = np.asarray(amps, dtype=complex)
    out_l, out_a = apply_sparse(h, labels, amps, scaled)
    order = np.argsort(labels)
    pos = np.searchsorted(labels[order], out_l)
    pos = np.minimum(pos, len(labels) - 1)
    hit = labels[order][pos] == out_l
    return complex(np.vdot(amps[order][pos[hit]], out_a[hit]))


# --- structural predicates ---------------------------------------------------

def is_stoquastic(h: Hamiltonian, tol: float = STOQ_TOL, cap_qubits: int = DEFAULT_CAP_QUBITS):
    """(True, None) or (False, (row, col, value)) for the worst off-diagonal entry."""
    mat = assemble(h, cap_qubits, scaled=False).tocoo()
    off = mat.row != mat.col
    rows, cols, vals = mat.row[off], mat.col[off], mat.data[off]
    bad = (np.real(vals) > tol) | (np.abs(np.imag(vals)) > tol)
    if not np.any(bad):
        return True, None
    score = np.where(bad, np.maximum(np.real(vals), np.abs(np.imag(vals))), -np.inf)
    i = int(np.lexsort((cols, rows, -score))[0])
    val = vals[i]
    return False, (int(rows[i]), int(cols[i]), complex(val) if np.iscomplexobj(vals) else float(val))


def locality(h: Hamiltonian) -> int:
    return max((t.arity for t in h.terms), default=0)


# --- the clock construction --------------------------------------------------

def _proj(bits: str) -> np.ndarray:
    d = 2 ** len(bits)
    out = np.zeros((d, d))
    out[bits_to_int(bits), bits_to_int(bits)] = 1.0
    return out


def _ketbra(a: str, b: str) -> np.ndarray:
    d = 2 ** len(a)
    out = np.zeros((d, d))
    out[bits_to_int(a), bits_to_int(b)] = 1.0
    return out


_P0, _P1 = _proj("0"), _proj("1")
_PMINUS = np.array([[0.5, -0.5], [-0.5, 0.5]])


def _prop_term(gate, clock: Sequence[int], before: str, after: str, t: int) -> LocalTerm:
    support = gate.support
    r = gate.matrix() if support else np.eye(1)
    eye = np.eye(r.shape[0])
    diag = np.kron(_proj(before) + _proj(after), eye)
    hop = np.kron(_ketbra(after, before) + _ketbra(before, after), r)
    return LocalTerm(tuple(support) + tuple(clock), diag - hop, f"PROP_{t}")


def compile_circuit(c: Circuit, x: str, N: int = 0, cap_qubits: int = DEFAULT_CAP_QUBITS) -> Hamiltonian:
    """H_in + H_clock + H_prop for the circuit pre-idled by ``N`` identity gates."""
    if c.output_basis is not Basis.Z:
        raise BasisMismatch("compile needs a Z-basis CRQVC")
    ch = pre_idle(c, N)
    w, K = ch.width, ch.K
    check_cap(w + K, cap_qubits)
    xs = c.initial_label(x)
    clock = [w + t for t in range(K)]  # clock[t-1] is c_t
    c1 = clock[0]
    terms = []
    for j in range(c.n):
        wrong = _P0 if (xs >> j) & 1 else _P1
        terms.append(LocalTerm((j, c1), np.kron(_P0, wrong), "IN"))
    for j in range(c.n, c.n + c.m):
        terms.append(LocalTerm((j, c1), np.kron(_P0, _P1), "IN"))
    for j in ch.plus_qubits:
        terms.append(LocalTerm((j, c1), np.kron(_P0, _PMINUS), "IN"))
    for t in range(1, K):
        terms.append(LocalTerm((clock[t - 1], clock[t]), _proj("01"), "CLOCK"))
    for t, g in enumerate(ch.gates, 1):
        if K == 1:
            terms.append(_prop_term(g, clock, "0", "1", t))
        elif t == 1:
            terms.append(_prop_term(g, clock[:2], "00", "10", t))
        elif t == K:
            terms.append(_prop_term(g, clock[K - 2:], "10", "11", t))
        else:
            terms.append(_prop_term(g, clock[t - 2:t + 1], "100", "110", t))
    meta = {"kind": "compiled", "system_qubits": w, "K_hat": K, "pre_idle": N, "input": x,
            "output_qubit": c.output_qubit, "clock_offset": w,
            "clean_prefix": N + c.clean_prefix_length(), "plus_qubits": list(ch.plus_qubits)}
    return Hamiltonian(w + K, tuple(terms), 1.0, meta)


def clock_label(t: int, w: int) -> int:
    return ((1 << t) - 1) << w


def history_state(c: Circuit, x: str, N: int = 0, upto: int | None = None):
    """Basis labels and amplitudes of (1/sqrt(T+1)) sum_{t<=T} |phi_t>|t>, T = ``upto`` or K_hat."""
    ch = pre_idle(c, N)
    w = ch.width
    T = ch.K if upto is None else upto
    current = branches_at(ch, x, 0)
    labels = [current | clock_label(0, w)]
    for t, g in enumerate(ch.gates[:T], 1):
        current = g.apply(current)
        labels.append(current | clock_label(t, w))
    labels = np.concatenate(labels)
    return labels, np.full(len(labels), 1 / np.sqrt(len(labels)), dtype=complex)


def branches_at(c: Circuit, x: str, t: int) -> np.ndarray:
    coins = np.arange(2**c.p, dtype=np.int64) << (c.n + c.m)
    states = coins | c.initial_label(x)
    for g in c.gates[:t]:
        states = g.apply(states)
    return states


def to_dense(labels, amps, n_total: int) -> np.ndarray:
    vec = np.zeros(2**n_total, dtype=complex)
    np.add.at(vec, np.asarray(labels, dtype=np.int64), amps)
    return vec


# --- perturbation and guided instances ---------------------------------------

@dataclass(frozen=True)
class PerturbationConfig:
    """Delta scales the clock Hamiltonian; f is the amplification exponent (errors 2**-f).

    ``slack`` is the constant C in the C/Delta eigenvalue envelope used for the
    thresholds; ``out_form`` picks the output penalty's clock factor: the
    2-local ``|1><1|`` on the last clock qubit, or the full ``|K><K|``
    projector on every clock qubit. Both agree on legal clock states.
    """

    Delta: float
    f: int = 2
    slack: float = 1.0
    out_form: str = "last_clock"
    enforce_bound: bool = True

    @staticmethod
    def minimum_delta(K_hat: int) -> float:
        return 112.0 * K_hat**3

    @classmethod
    def for_clock(cls, K_hat: int, multiplier: float = 1.0, **kw) -> "PerturbationConfig":
        return cls(Delta=multiplier * cls.minimum_delta(K_hat), **kw)


def output_term(h: Hamiltonian, out_form: str = "last_clock") -> LocalTerm:
    K, w = h.meta["K_hat"], h.meta["clock_offset"]
    out = h.meta["output_qubit"]
    if out_form == "last_clock":
        return LocalTerm((out, w + K - 1), np.kron(_P1, _P0), "OUT")
    if out_form == "projector":
        if K + 1 > MAX_ARITY:
            raise HamiltonianError(f"|K><K| projector form needs {K + 1} qubits (> {MAX_ARITY})")
        return LocalTerm((out,) + tuple(range(w, w + K)), np.kron(_proj("1" * K), _P0), "OUT")
    raise HamiltonianError(f"unknown out_form {out_form!r}")


def perturb(h: Hamiltonian, cfg: PerturbationConfig) -> Hamiltonian:
    """Delta * h + H_out, renormalised so the operator norm is at most 1."""
    if h.meta.get("kind") != "compiled":
        raise HamiltonianError("perturb needs a Hamiltonian produced by compile_circuit")
    K = h.meta["K_hat"]
    if cfg.enforce_bound and cfg.Delta < PerturbationConfig.minimum_delta(K):
        raise HamiltonianError(f"Delta={cfg.Delta} is below 112*K^3 = {PerturbationConfig.minimum_delta(K)}")
    terms = [t.scaled(cfg.Delta) for t in h.terms] + [output_term(h, cfg.out_form)]
    unscaled = Hamiltonian(h.n_total, terms)
    scale = 1.0 / unscaled.norm_bound()
    lo, hi = 2.0**-cfg.f / (K + 1), (1 - 2.0**-cfg.f) / (K + 1)
    meta = dict(h.meta, kind="perturbed", Delta=cfg.Delta, f=cfg.f, slack=cfg.slack, out_form=cfg.out_form,
                a_raw=lo + cfg.slack / cfg.Delta, b_raw=hi - cfg.slack / cfg.Delta,
                a=scale * (lo + cfg.slack / cfg.Delta), b=scale * (hi - cfg.slack / cfg.Delta))
    return Hamiltonian(h.n_total, tuple(terms), scale, meta)


@dataclass(frozen=True)
class GuidedInstance:
    ham: Hamiltonian
    a: float
    b: float
    guide: SubsetState
    delta: float
    budget: float = 1e-9
    expected: str | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise HamiltonianError(f"delta={self.delta} must lie in (0, 1)")
        if not (0 <= self.a <= 1 and 0 <= self.b <= 1):
            raise HamiltonianError("thresholds must lie in [0, 1]")
        if self.expected not in (None, "yes", "no"):
            raise HamiltonianError("expected must be 'yes', 'no' or None")


def guide_state(c: Circuit, x: str, N: int, Q: int, encoding: str = "isometry") -> SubsetState:
    """Truncated history (t = 0..Q) as an encoded subset state on the w + K_hat qubits.

    ``encoding="isometry"`` keeps one member per time step and encodes the
    untouched |+> ancillae with |0> -> |+>; ``"expand"`` lists all 2**p coin
    strings with identity isometries.
    """
    ch = pre_idle(c, N)
    x0 = c.initial_label(x)
    w = ch.width
    if encoding == "isometry":
        if Q > N + c.clean_prefix_length():
            raise HamiltonianError(f"Q={Q} reaches gates touching |+> ancillae (limit {N + c.clean_prefix_length()})")
        isos = [HADAMARD if q in ch.plus_qubits else IDENTITY for q in range(w)]
        s0 = SubsetState(w, (x0,), tuple(isos))
    elif encoding == "expand":
        coins = [r << (c.n + c.m) for r in range(2**c.p)]
        s0 = SubsetState(w, tuple(x0 | r for r in coins), (IDENTITY,) * w)
    else:
        raise HamiltonianError(f"unknown encoding {encoding!r}")
    return build_history_subset(s0, ch.gates, include_t0=True, upto=Q)


def build_guided_instance(c: Circuit, x: str, N: int, Q: int, cfg: PerturbationConfig, *,
                          epsilon: float | None = None, encoding: str = "isometry", budget: float = 1e-9,
                          cap_qubits: int = DEFAULT_CAP_QUBITS) -> GuidedInstance:
    """Perturbed compiled Hamiltonian plus the truncated-history guide.

    ``epsilon`` bounds ||xi - eta||; when omitted it is measured by exact
    diagonalisation. The promised overlap is the norm-tracking lower bound
    (sqrt((Q+1)/(K+1)) - epsilon)**2.
    """
    from .numerics import ground_state, norm_tracking_bounds

    L = c.clean_prefix_length()
    K = c.K + N
    if not 0 <= Q <= N + L:
        raise HamiltonianError(f"Q={Q} must satisfy 0 <= Q <= N + L = {N + L}; the guide would not be semi-classical")
    if Q >= K:
        raise HamiltonianError("Q = K_hat gives overlap 1; the promise needs delta < 1")
    base = compile_circuit(c, x, N, cap_qubits)
    ham = perturb(base, cfg)
    guide = guide_state(c, x, N, Q, encoding)
    raw = (Q + 1) / (K + 1)
    eps_source = "declared"
    if epsilon is None:
        labels, amps = history_state(c, x, N)
        eta = to_dense(labels, amps, ham.n_total).real
        xi = ground_state(ham, k=1).ground_vector
        xi = xi * np.sign(np.vdot(xi, eta).real or 1.0)
        epsilon = float(np.linalg.norm(xi - eta))
        eps_source = "measured"
    delta = norm_tracking_bounds(epsilon, raw).lower
    p_acc = acceptance_probability(c, x, cap_qubits)
    if p_acc >= 1 - 2.0**-cfg.f:
        expected = "yes"
    elif p_acc <= 2.0**-cfg.f:
        expected = "no"
    else:
        expected = None
    meta = {"Q": Q, "K_hat": K, "N": N, "L": L, "raw_overlap": raw, "epsilon": epsilon,
            "epsilon_source": eps_source, "encoding": encoding, "p_accept": str(p_acc),
            "p_output0": str(1 - p_acc)}
    return GuidedInstance(ham, ham.meta["a"], ham.meta["b"], guide, delta, budget, expected, meta)


# --- pinning -----------------------------------------------------------------

_PAULI = {"I": np.eye(2), "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
          "Y": np.array([[0.0, -1j], [1j, 0.0]]), "Z": np.diag([1.0, -1.0])}
PIN_ALLOWED = {"X", "Z", "XX", "ZZ"}


def pauli_matrix(word: str) -> np.ndarray:
    """Matrix of a Pauli word; character j acts on the j-th listed qubit (low bit)."""
    out = np.eye(1)
    for ch in word:
        out = np.kron(_PAULI[ch], out)
    return out


def pauli_hamiltonian(n: int, paulis: Sequence[tuple[float, str, Sequence[int]]], label: str = "USER") -> Hamiltonian:
    """``[(coef, "XX", (0, 1)), (coef, "Z", (2,))]`` -> Hamiltonian."""
    terms = [LocalTerm(tuple(qs), coef * pauli_matrix(word), label) for coef, word, qs in paulis]
    return Hamiltonian(n, tuple(terms))


def pauli_decompose(term: LocalTerm, tol: float = HERMITIAN_TOL) -> dict[tuple[str, tuple[int, ...]], complex]:
    """Nonzero Pauli coefficients of a term, keyed by (reduced word, qubits)."""
    k = term.arity
    out = {}
    for word in product("IXYZ", repeat=k):
        coef = np.trace(pauli_matrix("".join(word)).conj().T @ term.matrix) / 2**k
        if abs(coef) <= tol:
            continue
        qs = tuple(q for q, ch in zip(term.qubits, word) if ch != "I")
        reduced = "".join(ch for ch in word if ch != "I")
        key = (reduced, qs)
        out[key] = out.get(key, 0) + coef
    return out


def pin_embed(h2: Hamiltonian, tol: float = HERMITIAN_TOL) -> tuple[Hamiltonian, int]:
    """V (x) I - P (x) X_q with V the stoquastic part and P the positive X-type part of ``h2``.

    The auxiliary qubit ``q = h2.n_total`` is meant to be pinned in |->,
    where the block of the result reproduces ``h2``.
    """
    coeffs: dict[tuple[str, tuple[int, ...]], complex] = {}
    for term in h2.terms:
        for key, coef in pauli_decompose(term, tol).items():
            coeffs[key] = coeffs.get(key, 0) + coef
    q = h2.n_total
    terms = []
    for (word, qs), coef in sorted(coeffs.items(), key=lambda kv: (len(kv[0][1]), kv[0][1], kv[0][0])):
        if word and word not in PIN_ALLOWED:
            raise HamiltonianError(f"interaction {word} on {qs} is outside {{X, Z, XX, ZZ}}")
        if abs(coef.imag) > tol:
            raise HamiltonianError(f"complex coefficient {coef} on {word}{qs}")
        coef = coef.real
        if abs(coef) <= tol:
            continue
        if word.startswith("X") and coef > 0:
            terms.append(LocalTerm(qs + (q,), -coef * pauli_matrix(word + "X"), "PIN"))
        elif word:
            terms.append(LocalTerm(qs, coef * pauli_matrix(word), "USER"))
        else:
            terms.append(LocalTerm((0,), coef * np.eye(2), "USER"))
    meta = {"kind": "pinned", "pinned_qubit": q, "pinned_state": "-"}
    return Hamiltonian(q + 1, tuple(terms), h2.norm_scale, meta), q


# --- diagonal guided case ----------------------------------------------------

def diagonal_energies(h: Hamiltonian, labels: Sequence[int]) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    energy = np.zeros(len(labels))
    for t in h.terms:
        if not t.is_diagonal:
            raise HamiltonianError(f"term {t.label} on {t.qubits} is not diagonal")
        loc = np.zeros(len(labels), dtype=np.int64)
        for j, q in enumerate(t.qubits):
            loc |= ((labels >> q) & 1) << j
        energy += np.real(np.diag(t.matrix))[loc]
    return energy * h.norm_scale


def solve_diagonal(h: Hamiltonian, s: SubsetState) -> tuple[float, str]:
    """Minimum of <x|H|x> over members, ties to the lexicographically smallest string."""
    if s.encoded:
        raise HamiltonianError("solve_diagonal needs identity isometries")
    if s.n != h.n_total:
        raise HamiltonianError(f"subset on {s.n} qubits vs Hamiltonian on {h.n_total}")
    energies = diagonal_energies(h, s.members)
    best = energies.min()
    ties = [int_to_bits(x, s.n) for x, e in zip(s.members, energies) if e == best]
    return float(best), min(ties)


@dataclass(frozen=True)
class SimulatorParams:
    eta: float
    epsilon: float


def simulator_thresholds(a: float, b: float, params: SimulatorParams) -> tuple[float, float]:
    if params.epsilon < 0 or params.eta < 0:
        raise HamiltonianError("eta and epsilon must be non-negative")
    if params.epsilon >= (b - a) / 2:
        raise HamiltonianError(f"epsilon={params.epsilon} must be below (b - a)/2 = {(b - a) / 2}")
    return a + params.epsilon, b - params.epsilon


# --- file formats ------------------------------------------------------------

def format_hamiltonian(h: Hamiltonian) -> str:
    lines = [f"n_total {h.n_total}", f"norm_scale {float(h.norm_scale)!r}"]
    if h.meta:
        lines.append("meta " + json.dumps(h.meta, sort_keys=True))
    for t in h.terms:
        mat = np.asarray(t.matrix, dtype=complex).ravel()
        entries = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in mat)
        lines.append(f"term {t.label} {','.join(map(str, t.qubits))} {entries}")
    return "\n".join(lines) + "\n"


def parse_hamiltonian(text: str) -> Hamiltonian:
    n_total, scale, meta, terms = None, 1.0, {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        try:
            if head == "n_total":
                n_total = int(rest)
            elif head == "norm_scale":
                scale = float(rest)
            elif head == "meta":
                meta = json.loads(rest)
            elif head == "term":
                label, qubits, *vals = rest.split()
                qs = tuple(int(q) for q in qubits.split(",") if q)
                nums = np.array([float(v) for v in vals])
                mat = (nums[0::2] + 1j * nums[1::2]).reshape(2 ** len(qs), 2 ** len(qs))
                if not np.any(mat.imag):
                    mat = mat.real
                terms.append(LocalTerm(qs, mat, label))
            else:
                raise HamiltonianError(f"unknown record {head!r}")
        except (ValueError, IndexError) as exc:
            raise HamiltonianError(f"line {lineno}: {exc}") from None
    if n_total is None:
        raise HamiltonianError("missing n_total")
    return Hamiltonian(n_total, tuple(terms), scale, meta)


INSTANCE_FORMAT = "stoqforge-instance/1"


def save_instance(g: GuidedInstance, path) -> dict:
    """Write ``<stem>.ham``, ``<stem>.sstate`` and the JSON bundle at ``path``."""
    from pathlib import Path

    from .subsetstate import format_state

    path = Path(path)
    ham_path, state_path = path.with_suffix(".ham"), path.with_suffix(".sstate")
    ham_path.write_text(format_hamiltonian(g.ham))
    state_path.write_text(format_state(g.guide))
    record = {"format": INSTANCE_FORMAT, "hamiltonian": ham_path.name, "guide": state_path.name,
              "a": g.a, "b": g.b, "delta": g.delta, "budget": g.budget, "expected": g.expected, "meta": g.meta}
    path.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return record


def load_instance(path) -> GuidedInstance:
    from pathlib import Path

    from .subsetstate import parse_state

    path = Path(path)
    try:
        record = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise HamiltonianError(f"{path}: not valid JSON ({exc})") from None
    required = {"hamiltonian": str, "guide": str, "a": (int, float), "b": (int, float), "delta": (int, float)}
    if not isinstance(record, dict):
        raise HamiltonianError(f"{path}: instance must be a JSON object")
    for key, kind in required.items():
        if not isinstance(record.get(key), kind):
            raise HamiltonianError(f"{path}: field {key!r} missing or of the wrong type")
    ham = parse_hamiltonian((path.parent / record["hamiltonian"]).read_text())
    guide = parse_state((path.parent / record["guide"]).read_text())
    return GuidedInstance(ham, float(record["a"]), float(record["b"]), guide, float(record["delta"]),
                          float(record.get("budget", 1e-9)), record.get("expected"), record.get("meta", {}))
