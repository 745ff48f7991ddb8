"""Subset states and semi-classical encoded subset states.

A state is a duplicate-free set of n-bit members (stored as integers, bit j =
coordinate j) and one single-qubit isometry per coordinate. Coordinate j of
member x is mapped to ``V_j |x_j>``, a vector on ``m_j`` qubits; the encoded
vector lives on ``M = sum(m_j)`` qubits with coordinate blocks laid out in
order, lowest bits first.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .circuit import Gate, bits_to_int, int_to_bits

ISOMETRY_CAP = 3
NORM_TOL = 1e-12
DENSE_CAP_QUBITS = 22


class SubsetStateError(ValueError):
    pass


class EncodedCoordinateError(SubsetStateError):
    """A reversible gate touched a coordinate carrying a non-identity isometry."""


@dataclass(frozen=True, eq=False)
class Isometry:
    """Map C^2 -> (C^2)^{m}; ``matrix`` has shape (2**m, 2) with orthonormal columns."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[1] != 2 or mat.shape[0] < 2 or mat.shape[0] & (mat.shape[0] - 1):
            raise SubsetStateError(f"isometry must be a 2**m x 2 matrix, got shape {mat.shape}")
        if self.out_qubits > ISOMETRY_CAP:
            raise SubsetStateError(f"isometry on {self.out_qubits} qubits exceeds cap {ISOMETRY_CAP}")
        if not np.allclose(mat.conj().T @ mat, np.eye(2), atol=NORM_TOL, rtol=0):
            raise SubsetStateError("isometry columns are not orthonormal")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def out_qubits(self) -> int:
        return int(np.log2(np.asarray(self.matrix).shape[0]))

    @property
    def is_identity(self) -> bool:
        return self.matrix.shape == (2, 2) and np.array_equal(self.matrix, np.eye(2))

    @property
    def is_subset_valued(self) -> bool:
        """True when both images are themselves subset states (equal positive amplitudes)."""
        for col in self.matrix.T:
            nz = np.abs(col) > NORM_TOL
            vals = col[nz]
            if not np.allclose(vals, vals[0].real, atol=NORM_TOL) or vals[0].real <= 0:
                return False
        return True

    @property
    def separating(self) -> bool:
        """Images of |0> and |1> have disjoint computational-basis supports."""
        a, b = (np.abs(self.matrix) > NORM_TOL).T
        return not np.any(a & b)

    def __eq__(self, other):
        return isinstance(other, Isometry) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


IDENTITY = Isometry(np.eye(2))
HADAMARD = Isometry(np.array([[1, 1], [1, -1]]) / np.sqrt(2))
"""|0> -> |+>, |1> -> |->; the encoding of untouched |+> ancillae."""


@dataclass(frozen=True)
class SubsetState:
    n: int
    members: tuple[int, ...]
    isometries: tuple[Isometry, ...]

    def __post_init__(self):
        members = tuple(sorted(set(int(x) for x in self.members)))
        if len(members) != len(self.members):
            raise SubsetStateError("duplicate members")
        if not members:
            raise SubsetStateError("a subset state needs at least one member")
        if members[0] < 0 or members[-1] >= 1 << self.n:
            raise SubsetStateError(f"member outside {{0,1}}^{self.n}")
        if len(self.isometries) != self.n:
            raise SubsetStateError(f"expected {self.n} isometries, got {len(self.isometries)}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "isometries", tuple(self.isometries))

    @classmethod
    def from_bits(cls, members: Iterable[str], isometries: Sequence[Isometry] | None = None):
        members = list(members)
        n = len(members[0])
        if any(len(s) != n for s in members):
            raise SubsetStateError("members have different lengths")
        labels = [bits_to_int(s) for s in members]
        if len(set(labels)) != len(labels):
            raise SubsetStateError("duplicate members")
        return cls(n, tuple(labels), tuple(isometries) if isometries is not None else (IDENTITY,) * n)

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def M(self) -> int:
        return sum(v.out_qubits for v in self.isometries)

    @property
    def encoded(self) -> tuple[int, ...]:
        return tuple(j for j, v in enumerate(self.isometries) if not v.is_identity)

    def bitstrings(self) -> list[str]:
        return [int_to_bits(x, self.n) for x in self.members]

    def is_semi_classical(self, budget: int) -> bool:
        return self.size <= budget

    def to_dense(self, cap_qubits: int = DENSE_CAP_QUBITS) -> np.ndarray:
        if self.M > cap_qubits:
            raise SubsetStateError(f"dense vector on {self.M} qubits exceeds cap {cap_qubits}")
        vec = np.zeros(2**self.M, dtype=complex)
        if not self.encoded:
            vec[list(self.members)] = 1.0
        else:
            for x in self.members:
                amp = np.ones(1, dtype=complex)
                for j, v in enumerate(self.isometries):
                    amp = np.kron(v.matrix[:, (x >> j) & 1], amp)
                vec += amp
        return vec / np.sqrt(self.size)

    def description_bits(self) -> int:
        """Length of the canonical serialisation, in bits."""
        return 8 * len(format_state(self).encode())


def apply_reversible_gate(s: SubsetState, g: Gate) -> SubsetState:
    if max(g.targets) >= s.n:
        raise SubsetStateError(f"gate {g} outside {s.n} coordinates")
    touched = set(g.support).intersection(s.encoded)
    if touched:
        raise EncodedCoordinateError(f"gate {g} touches encoded coordinate(s) {sorted(touched)}")
    moved = g.apply(np.array(s.members, dtype=np.int64))
    return SubsetState(s.n, tuple(int(x) for x in moved), s.isometries)


def tensor(a: SubsetState, b: SubsetState) -> SubsetState:
    """``a`` occupies the low coordinates, ``b`` the high ones."""
    lo = np.array(a.members, dtype=object)
    hi = np.array(b.members, dtype=object) << a.n
    members = (hi[:, None] | lo[None, :]).ravel()
    return SubsetState(a.n + b.n, tuple(int(x) for x in members), a.isometries + b.isometries)


def basis_state(bits: str, isometries: Sequence[Isometry] | None = None) -> SubsetState:
    return SubsetState.from_bits([bits], isometries)


def minus_state() -> SubsetState:
    """|-> = H|1> as a one-member encoded subset state."""
    return SubsetState(1, (1,), (HADAMARD,))


def build_history_subset(s0: SubsetState, gates: Sequence[Gate], include_t0: bool = True,
                         upto: int | None = None) -> SubsetState:
    """Members ``R_t...R_1(S) x {1^t 0^(K-t)}`` for t in 1..K (0..K with ``include_t0``).

    The K = len(gates) clock coordinates follow the system coordinates and
    carry identity isometries. ``upto`` truncates the sum at t = upto while
    keeping the full K-qubit clock; later gates are never applied.
    """
    K = len(gates)
    if K == 0:
        raise SubsetStateError("history needs at least one gate")
    T = K if upto is None else upto
    if not 0 <= T <= K or (T == 0 and not include_t0):
        raise SubsetStateError(f"truncation time {T} outside the history")
    members = list(s0.members) if include_t0 else []
    current = s0
    for t, g in enumerate(gates[:T], 1):
        current = apply_reversible_gate(current, g)
        clock = ((1 << t) - 1) << s0.n
        members += [x | clock for x in current.members]
    return SubsetState(s0.n + K, tuple(members), s0.isometries + (IDENTITY,) * K)


def _gram(a: Isometry, b: Isometry) -> np.ndarray:
    if a.out_qubits != b.out_qubits:
        raise SubsetStateError("coordinate blocks of different sizes")
    return a.matrix.conj().T @ b.matrix


def inner(a: SubsetState, b: SubsetState) -> complex:
    """<a|b>, computed from the member lists and per-coordinate 2x2 Gram matrices."""
    if a.n != b.n:
        raise SubsetStateError(f"dimension mismatch: {a.n} vs {b.n} coordinates")
    if a.isometries == b.isometries:
        common = len(set(a.members).intersection(b.members))
        return complex(common / np.sqrt(a.size * b.size))
    xa = np.array(a.members, dtype=np.int64)
    xb = np.array(b.members, dtype=np.int64)
    amp = np.ones((len(xa), len(xb)), dtype=complex)
    for j, (va, vb) in enumerate(zip(a.isometries, b.isometries)):
        g = _gram(va, vb)
        amp *= g[((xa >> j) & 1)[:, None], ((xb >> j) & 1)[None, :]]
    return complex(amp.sum() / np.sqrt(a.size * b.size))


def overlap(a: SubsetState, b) -> tuple[complex, float]:
    """Inner product <a|b> and its squared magnitude; ``b`` may be a dense vector."""
    if isinstance(b, SubsetState):
        value = inner(a, b)
    else:
        b = np.asarray(b)
        if b.shape != (2**a.M,):
            raise SubsetStateError(f"dimension mismatch: state on {a.M} qubits vs vector of length {b.size}")
        value = complex(np.vdot(a.to_dense(), b))
    return value, abs(value) ** 2


def exact_distribution(s: SubsetState) -> dict[str, float]:
    vec = s.to_dense()
    probs = np.abs(vec) ** 2
    return {int_to_bits(int(z), s.M): float(probs[z]) for z in np.flatnonzero(probs > 1e-15)}


def sample(s: SubsetState, shots: int, seed: int) -> Counter:
    """Draw ``shots`` M-bit strings from |<z|s>|^2, reproducibly for a given seed.

    Members that agree on every coordinate whose isometry has disjoint image
    supports cannot interfere with members that do not, so the members split
    into mutually orthogonal groups of weight |G|/|S|. Singleton groups are
    sampled block by block; larger groups use exact chain-rule sampling over
    their interfering coordinates.
    """
    if shots < 1:
        raise SubsetStateError("shots must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    members = np.array(s.members, dtype=np.int64)
    sep_mask = sum(1 << j for j, v in enumerate(s.isometries) if v.separating)
    keys, group_of = np.unique(members & sep_mask, return_inverse=True)
    picks = rng.integers(len(members), size=shots)
    offsets = np.cumsum([0] + [v.out_qubits for v in s.isometries])
    out = np.zeros(shots, dtype=np.int64)
    groups = {}
    for idx, g in enumerate(group_of):
        groups.setdefault(int(g), []).append(idx)
    shot_group = group_of[picks]
    for g, idxs in groups.items():
        shot_ids = np.flatnonzero(shot_group == g)
        if not len(shot_ids):
            continue
        if len(idxs) == 1:
            x = members[idxs[0]]
            chosen = np.full(len(shot_ids), x)
            out[shot_ids] = _sample_product(s, chosen, offsets, rng)
        else:
            out[shot_ids] = _sample_group(s, members[idxs], len(shot_ids), offsets, rng)
    return Counter(int_to_bits(int(z), s.M) for z in out)


def _sample_product(s, xs, offsets, rng):
    z = np.zeros(len(xs), dtype=np.int64)
    for j, v in enumerate(s.isometries):
        probs = np.abs(v.matrix) ** 2  # (2**m, 2)
        cdf = np.cumsum(probs[:, (xs >> j) & 1], axis=0)
        u = rng.random(len(xs))
        block = np.minimum((u[None, :] > cdf).sum(axis=0), len(cdf) - 1)
        z |= block.astype(np.int64) << offsets[j]
    return z


def _sample_group(s, group, shots, offsets, rng):
    """Chain-rule sampling of (1/sqrt|G|) sum_{x in G} (x) V_j|x_j>, coordinate by coordinate."""
    weights = np.ones((shots, len(group)), dtype=complex)
    z = np.zeros(shots, dtype=np.int64)
    for j, v in enumerate(s.isometries):
        bits = (group >> j) & 1
        # members differing on a later coordinate have orthogonal images there
        later = group >> (j + 1)
        _, cls = np.unique(later, return_inverse=True)
        onehot = np.zeros((len(group), cls.max() + 1))
        onehot[np.arange(len(group)), cls] = 1.0
        amps = v.matrix[:, bits]  # (2**m, |G|)
        cand = weights[None, :, :] * amps[:, None, :]  # (2**m, shots, |G|)
        probs = (np.abs(cand @ onehot) ** 2).sum(axis=2)  # (2**m, shots)
        cdf = np.cumsum(probs / probs.sum(axis=0), axis=0)
        u = rng.random(shots)
        block = np.minimum((u[None, :] > cdf).sum(axis=0), len(cdf) - 1)
        weights = cand[block, np.arange(shots), :]
        z |= block.astype(np.int64) << offsets[j]
    return z


def total_variation(counts: Counter, exact: dict[str, float]) -> float:
    shots = sum(counts.values())
    keys = set(counts) | set(exact)
    return 0.5 * sum(abs(counts.get(k, 0) / shots - exact.get(k, 0.0)) for k in keys)


# --- file format -------------------------------------------------------------

def format_state(s: SubsetState) -> str:
    lines = [f"n {s.n}", "members"]
    lines += s.bitstrings()
    for j, v in enumerate(s.isometries):
        if v.is_identity:
            continue
        entries = " ".join(f"{float(z.real)!r} {float(z.imag)!r}" for z in v.matrix.ravel())
        lines.append(f"isometry {j} {v.out_qubits} {entries}")
    return "\n".join(lines) + "\n"


def parse_state(text: str) -> SubsetState:
    n = None
    members: list[str] = []
    isos: dict[int, Isometry] = {}
    in_members = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "n":
            n = int(rest[0])
            in_members = False
        elif head == "members":
            in_members = True
        elif head == "isometry":
            in_members = False
            j, mq = int(rest[0]), int(rest[1])
            vals = [float(t) for t in rest[2:]]
            if len(vals) != 2 * 2 * 2**mq:
                raise SubsetStateError(f"line {lineno}: isometry on {mq} qubits needs {4 * 2**mq} reals")
            mat = (np.array(vals[0::2]) + 1j * np.array(vals[1::2])).reshape(2**mq, 2)
            isos[j] = Isometry(mat)
        elif in_members and set(head) <= {"0", "1"}:
            members.append(head)
        else:
            raise SubsetStateError(f"line {lineno}: cannot parse {line!r}")
    if n is None:
        raise SubsetStateError("missing 'n' line")
    if any(len(b) != n for b in members):
        raise SubsetStateError(f"members must be {n}-bit strings")
    if any(j >= n for j in isos):
        raise SubsetStateError("isometry for a coordinate outside the state")
    if not members:
        raise SubsetStateError("no members")
    return SubsetState.from_bits(members, [isos.get(j, IDENTITY) for j in range(n)])


def all_strings(n: int) -> list[str]:
    return ["".join(bits) for bits in product("01", repeat=n)]
