"""Exact spectra, overlap bounds and instance verification."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .circuit import DEFAULT_CAP_QUBITS, Circuit, acceptance_probability
from .hamiltonian import (MAX_ARITY, GuidedInstance, Hamiltonian, PerturbationConfig, assemble, compile_circuit,
                          history_state, is_stoquastic, locality, perturb, to_dense)

DENSE_THRESHOLD = 2**10
DENSE_CAP = 2**12
SPARSE_CAP = 2**22
FACTOR_CAP = 2**16
CG_RTOL = 1e-13
RESIDUAL_TOL = 1e-8
DEGENERACY_TOL = 1e-10


class NumericsError(RuntimeError):
    pass


class NonConvergence(NumericsError):
    pass


@dataclass
class SpectralReport:
    eigenvalues: list[float]
    ground_vector: np.ndarray
    gap: float
    residual: float
    method: str
    degenerate: bool = False
    ground_space: np.ndarray | None = None
    overlaps: dict[str, float] = field(default_factory=dict)

    @property
    def lambda0(self) -> float:
        return self.eigenvalues[0]

    def projector_weight(self, vec: np.ndarray) -> float:
        """||Pi_0 vec||^2 over the numerically degenerate ground space."""
        basis = self.ground_space if self.ground_space is not None else self.ground_vector[:, None]
        return float(np.sum(np.abs(basis.conj().T @ vec) ** 2))

    def summary(self) -> dict:
        return {"eigenvalues": self.eigenvalues, "gap": self.gap, "residual": self.residual,
                "method": self.method, "degenerate": self.degenerate, "overlaps": dict(self.overlaps)}


def gershgorin_interval(mat: sp.spmatrix) -> tuple[float, float]:
    diag = mat.diagonal().real
    radius = np.asarray(abs(mat).sum(axis=1)).ravel() - np.abs(diag)
    return float((diag - radius).min()), float((diag + radius).max())


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec) > np.abs(vec).max() * (1 - 1e-9)))
    vec = vec * (abs(vec[i]) / vec[i])
    return vec.real if np.allclose(vec.imag, 0, atol=1e-14) else vec


def ground_state(h: Hamiltonian | sp.spmatrix, k: int = 2, *, method: str = "auto",
                 dense_threshold: int = DENSE_THRESHOLD, dense_cap: int = DENSE_CAP, sparse_cap: int = SPARSE_CAP,
                 factor_cap: int = FACTOR_CAP, maxiter: int | None = None, cap_qubits: int = DEFAULT_CAP_QUBITS) -> SpectralReport:
    """Lowest ``k`` eigenpairs by dense diagonalisation or shift-invert Lanczos.

    The shift sits just below the Gershgorin lower bound, so the eigenvalues
    closest to it are the lowest ones. The start vector is the normalised
    all-ones vector, which keeps runs reproducible.
    """
    mat = assemble(h, cap_qubits) if isinstance(h, Hamiltonian) else sp.csr_matrix(h)
    dim = mat.shape[0]
    if dim > sparse_cap:
        raise NumericsError(f"dimension {dim} exceeds the sparse cap {sparse_cap}")
    k = min(k, dim)
    use_dense = method == "dense" or (method == "auto" and (dim <= dense_threshold or k >= dim - 1))
    if use_dense and dim > dense_cap:
        raise NumericsError(f"dimension {dim} exceeds the dense cap {dense_cap}")
    lo, hi = gershgorin_interval(mat)
    scale = max(abs(lo), abs(hi), 1e-300)
    if use_dense:
        vals, vecs = np.linalg.eigh(mat.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
        used = "dense"
    else:
        sigma = lo - 1e-2 * (hi - lo) - 1e-12 * scale
        v0 = np.ones(dim) / np.sqrt(dim)
        try:
            if dim <= factor_cap:
                vals, vecs = sla.eigsh(mat, k=k, sigma=sigma, which="LM", v0=v0, maxiter=maxiter)
                used = "shift-invert"
            else:
                vals, vecs = _shift_invert_cg(mat, k, sigma, v0, maxiter)
                used = "shift-invert-cg"
        except (sla.ArpackNoConvergence, RuntimeError) as exc:
            if dim > dense_cap:
                raise NonConvergence(f"sparse eigensolver failed at dimension {dim}: {exc}") from None
            vals, vecs = np.linalg.eigh(mat.toarray())
            vals, vecs = vals[:k], vecs[:, :k]
            used = "dense-fallback"
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vals = [float(v) for v in vals]
    ground = _fix_phase(vecs[:, 0])
    residual = float(np.linalg.norm(mat @ ground - vals[0] * ground))
    if residual > RESIDUAL_TOL * scale:
        raise NonConvergence(f"ground-state residual {residual:.3e} exceeds {RESIDUAL_TOL} * ||H||")
    gap = vals[1] - vals[0] if len(vals) > 1 else float("nan")
    degenerate = len(vals) > 1 and gap < DEGENERACY_TOL
    space = None
    if degenerate:
        space = vecs[:, [i for i, v in enumerate(vals) if v - vals[0] < DEGENERACY_TOL]]
    return SpectralReport(vals, ground, gap, residual, used, degenerate, space)


def _shift_invert_cg(mat, k, sigma, v0, maxiter):
    """Shift-invert Lanczos with (H - sigma) solved by conjugate gradients.

    sigma lies below the spectrum, so H - sigma is positive definite and no
    factorisation (and its fill-in) is needed. Two extra pairs are requested
    because inexact solves can skip one member of a near-degenerate cluster.
    """
    dim = mat.shape[0]
    shifted = (mat - sigma * sp.identity(dim, format="csr")).tocsr()

    def solve(b):
        x, info = sla.cg(shifted, b, rtol=CG_RTOL, atol=0.0, maxiter=10 * dim)
        if info:
            raise NonConvergence(f"conjugate gradients did not converge (info={info})")
        return x

    op = sla.LinearOperator((dim, dim), matvec=solve, dtype=mat.dtype)
    want = min(k + 2, dim - 1)
    vals, vecs = sla.eigsh(mat, k=want, sigma=sigma, which="LM", OPinv=op, v0=v0, maxiter=maxiter)
    order = np.argsort(vals)[:k]
    return vals[order], vecs[:, order]


def perron_frobenius_ok(vec: np.ndarray, tol: float = 1e-8) -> bool:
    """True when the vector is, up to a global phase, real and entrywise non-negative."""
    vec = _fix_phase(np.asarray(vec))
    return bool(np.all(np.abs(np.imag(vec)) <= tol) and np.all(np.real(vec) >= -tol))


@dataclass(frozen=True)
class NormTriple:
    A: float
    B: float
    lower: float
    upper: float


def norm_tracking_bounds(A: float, B: float) -> NormTriple:
    """Interval for |<a|c>|^2 given ||a - b|| <= A and |<b|c>|^2 >= B."""
    if A < 0 or not 0 <= B <= 1:
        raise ValueError(f"need A >= 0 and 0 <= B <= 1, got A={A}, B={B}")
    root = np.sqrt(B)
    lower = (root - A) ** 2 if A <= root else 0.0
    return NormTriple(A, B, float(lower), float(min((root + A) ** 2, 1.0)))


def pinned_block(h: Hamiltonian, qubit: int, state: str = "-", cap_qubits: int = DEFAULT_CAP_QUBITS) -> sp.csr_matrix:
    """<s|_q H |s>_q on the remaining qubits, for s in {0, 1, +, -}."""
    vec = {"0": (1.0, 0.0), "1": (0.0, 1.0), "+": (2**-0.5, 2**-0.5), "-": (2**-0.5, -(2**-0.5))}[state]
    mat = assemble(h, cap_qubits)
    rest = np.arange(2 ** (h.n_total - 1), dtype=np.int64)
    low = rest & ((1 << qubit) - 1)
    high = (rest >> qubit) << (qubit + 1)
    rows = np.concatenate([low | high, low | high | (1 << qubit)])
    cols = np.concatenate([rest, rest])
    vals = np.concatenate([np.full(len(rest), vec[0]), np.full(len(rest), vec[1])])
    W = sp.csr_matrix((vals, (rows, cols)), shape=(h.dim, len(rest)))
    return (W.conj().T @ mat @ W).tocsr()


def embed_qubit(vec: np.ndarray, qubit: int, state: str = "-") -> np.ndarray:
    """vec (x) |s> with |s> placed at position ``qubit``."""
    s = {"0": (1.0, 0.0), "1": (0.0, 1.0), "+": (2**-0.5, 2**-0.5), "-": (2**-0.5, -(2**-0.5))}[state]
    rest = np.arange(len(vec), dtype=np.int64)
    low = rest & ((1 << qubit) - 1)
    high = (rest >> qubit) << (qubit + 1)
    out = np.zeros(2 * len(vec), dtype=np.result_type(vec, float))
    out[low | high] = s[0] * vec
    out[low | high | (1 << qubit)] = s[1] * vec
    return out


# --- perturbation envelope ---------------------------------------------------

def perturbation_sweep(c: Circuit, x: str, N: int = 0, multipliers=(1, 2, 4), f: int = 2,
                       out_form: str = "last_clock", cap_qubits: int = DEFAULT_CAP_QUBITS) -> list[dict]:
    """Lowest eigenvalue of Delta*H + H_out against Pr[output 0]/(K+1) for Delta = mult * 112 K^3."""
    base = compile_circuit(c, x, N, cap_qubits)
    K = base.meta["K_hat"]
    target = float(1 - acceptance_probability(c, x, cap_qubits)) / (K + 1)
    labels, amps = history_state(c, x, N)
    eta = to_dense(labels, amps, base.n_total).real
    rows = []
    for mult in multipliers:
        cfg = PerturbationConfig.for_clock(K, mult, f=f, out_form=out_form)
        ham = perturb(base, cfg)
        rep = ground_state(ham, k=2)
        xi = rep.ground_vector * np.sign(np.vdot(rep.ground_vector, eta).real or 1.0)
        lam = rep.lambda0 / ham.norm_scale
        rows.append({"Delta": cfg.Delta, "lambda0": lam, "target": target, "error": abs(lam - target),
                     "xi_eta_distance": float(np.linalg.norm(xi - eta)), "scaled_lambda0": rep.lambda0,
                     "scaled_gap": rep.gap, "norm_scale": ham.norm_scale})
    return rows


def fit_slack(rows: list[dict]) -> float:
    """Smallest C with |lambda0 - target| <= C / Delta on every sweep row."""
    return max(r["Delta"] * r["error"] for r in rows)


# --- instance verification ---------------------------------------------------

def verify_instance(g: GuidedInstance, report_path: str | Path | None = None, *, energy_tol: float = 1e-12,
                    overlap_tol: float = 1e-12, stoq_tol: float = 1e-12, max_locality: int = MAX_ARITY,
                    cap_qubits: int = DEFAULT_CAP_QUBITS) -> dict:
    """Check every promise of a guided instance against exact diagonalisation."""
    ham = g.ham
    if g.guide.M != ham.n_total:
        raise NumericsError(f"guide on {g.guide.M} qubits vs Hamiltonian on {ham.n_total}")
    rep = ground_state(ham, k=2, cap_qubits=cap_qubits)
    zeta = g.guide.to_dense()
    weight = rep.projector_weight(zeta)
    stoq, witness = is_stoquastic(ham, stoq_tol, cap_qubits)
    loc = locality(ham)
    lam = rep.lambda0
    if g.expected == "yes":
        side_ok, side = lam <= g.a + energy_tol, "lambda0 <= a"
    elif g.expected == "no":
        side_ok, side = lam >= g.b - energy_tol, "lambda0 >= b"
    else:
        side_ok, side = False, "no promised side"
    norm = ham.norm_bound()
    claims = {
        "stoquastic": {"pass": stoq, "witness": list(witness) if witness else None},
        "locality": {"pass": loc <= max_locality, "value": loc, "limit": max_locality},
        "overlap": {"pass": weight >= g.delta - overlap_tol, "value": weight, "delta": g.delta},
        "energy_side": {"pass": bool(side_ok), "lambda0": lam, "a": g.a, "b": g.b, "expected": g.expected,
                        "check": side},
        "promise_gap": {"pass": g.b - g.a >= g.budget, "b_minus_a": g.b - g.a, "budget": g.budget},
        "norm": {"pass": norm <= 1 + 1e-12, "bound": norm},
    }
    if witness and isinstance(witness[2], complex):
        claims["stoquastic"]["witness"] = [witness[0], witness[1], [witness[2].real, witness[2].imag]]
    verdict = {
        "verdict": "PASS" if all(c["pass"] for c in claims.values()) else "FAIL",
        "claims": claims,
        "spectrum": rep.summary(),
        "tolerances": {"energy": energy_tol, "overlap": overlap_tol, "stoquastic": stoq_tol,
                       "residual": RESIDUAL_TOL, "degeneracy": DEGENERACY_TOL},
        "instance": {"n_total": ham.n_total, "a": g.a, "b": g.b, "delta": g.delta, "expected": g.expected,
                     "guide_members": g.guide.size, "meta": g.meta},
    }
    if report_path is not None:
        Path(report_path).write_text(json.dumps(verdict, sort_keys=True, indent=2) + "\n")
    return verdict
