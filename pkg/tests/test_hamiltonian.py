import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stoqforge.circuit import CNOT, ID, TOFFOLI, Circuit, X, acceptance_probability, pre_idle
from stoqforge.hamiltonian import (GuidedInstance, Hamiltonian, HamiltonianError, LocalTerm, PerturbationConfig,
                                   SimulatorParams, assemble, build_guided_instance, compile_circuit,
                                   diagonal_energies, format_hamiltonian, guide_state, history_state,
                                   is_stoquastic, load_instance, locality, output_term, parse_hamiltonian,
                                   pauli_decompose, pauli_hamiltonian, pauli_matrix, perturb, pin_embed,
                                   save_instance, simulator_thresholds, solve_diagonal, sparse_expectation,
                                   to_dense)
from stoqforge.subsetstate import SubsetState, overlap

from conftest import circuit_and_input, clock_hamiltonian_oracle, history_oracle, initial_vector


def dense(h, scaled=True):
    return assemble(h, scaled=scaled).toarray()


# --- terms and assembly ----------------------------------------------------

def test_term_validation():
    with pytest.raises(HamiltonianError):
        LocalTerm((0, 0), np.eye(4))
    with pytest.raises(HamiltonianError):
        LocalTerm((0,), np.array([[0, 1], [0, 0]]))
    with pytest.raises(HamiltonianError):
        LocalTerm(tuple(range(7)), np.eye(2**7))
    with pytest.raises(HamiltonianError):
        LocalTerm((0,), np.eye(2), "BOGUS")
    with pytest.raises(HamiltonianError):
        Hamiltonian(1, (LocalTerm((1,), np.eye(2)),))


def test_assembly_bit_order():
    # Z on qubit 1 of two: basis labels 2 and 3 have qubit 1 set
    h = pauli_hamiltonian(2, [(1.0, "Z", (1,))])
    assert np.allclose(np.diag(dense(h)), [1, 1, -1, -1])
    h = pauli_hamiltonian(2, [(1.0, "XZ", (0, 1))])
    assert np.allclose(dense(h), np.kron(np.diag([1, -1]), [[0, 1], [1, 0]]))


@given(st.integers(1, 4), st.data())
def test_assembly_matches_kron_of_paulis(n, data):
    word = data.draw(st.text("IXYZ", min_size=n, max_size=n))
    coef = data.draw(st.floats(-2, 2, allow_nan=False))
    h = pauli_hamiltonian(n, [(coef, word, tuple(range(n)))])
    full = np.eye(1)
    for ch in word:
        full = np.kron(pauli_matrix(ch), full)
    assert np.allclose(dense(h), coef * full)


def test_sparse_expectation_matches_dense(rng):
    h = pauli_hamiltonian(3, [(0.7, "XX", (0, 2)), (-1.1, "Z", (1,)), (0.3, "YY", (1, 2))])
    vec = rng.normal(size=8) + 1j * rng.normal(size=8)
    labels = np.arange(8)
    assert sparse_expectation(h, labels, vec) == pytest.approx(np.vdot(vec, dense(h) @ vec))


# --- stoquasticity and locality ---------------------------------------------

def test_minus_x_is_stoquastic():
    ok, witness = is_stoquastic(pauli_hamiltonian(1, [(-1.0, "X", (0,))]))
    assert ok and witness is None


def test_plus_x_is_not_stoquastic():
    ok, witness = is_stoquastic(pauli_hamiltonian(1, [(1.0, "X", (0,))]))
    assert not ok
    assert witness[2] == pytest.approx(1.0)


def test_cancelling_terms_are_stoquastic():
    h = pauli_hamiltonian(1, [(1.0, "X", (0,)), (-1.5, "X", (0,))])
    assert is_stoquastic(h)[0]


# --- the compiler ----------------------------------------------------------

def test_one_gate_kitaev():
    c = Circuit(1, 0, 0, (X(0),))
    h = compile_circuit(c, "1")
    H = dense(h)
    assert H.shape == (4, 4)
    vals, vecs = np.linalg.eigh(H)
    assert vals[0] == pytest.approx(0, abs=1e-14)
    ground = vecs[:, 0] * np.sign(vecs[1, 0])
    expect = np.zeros(4)
    expect[0b01] = expect[0b10] = 1 / np.sqrt(2)  # |1>|0> and |0>|1>
    assert np.allclose(ground, expect)


def test_input_penalty_energy():
    c = Circuit(2, 1, 0, (CNOT(0, 2), X(1)))
    H = dense(compile_circuit(c, "10"))
    wrong = 0b010  # x = 01 on the system, clock 00
    assert H[wrong, wrong] >= 1


@given(circuit_and_input(max_width=3, max_gates=4), st.integers(0, 2))
def test_compile_matches_projector_oracle(cx, N):
    c, x = cx
    h = compile_circuit(c, x, N)
    assert np.allclose(dense(h), clock_hamiltonian_oracle(pre_idle(c, N), x), atol=1e-14)


@given(circuit_and_input(max_width=3, max_gates=5), st.integers(0, 2))
def test_history_state_is_annihilated(cx, N):
    c, x = cx
    h = compile_circuit(c, x, N)
    labels, amps = history_state(c, x, N)
    eta = to_dense(labels, amps, h.n_total)
    assert np.allclose(eta, history_oracle(pre_idle(c, N), x), atol=1e-14)
    assert np.linalg.norm(dense(h) @ eta) <= 1e-12
    assert is_stoquastic(h)[0]


def test_random_circuit_gap(rng):
    from stoqforge.circuit import random_circuit

    c = random_circuit(rng, 1, 1, 1, 4)
    h = compile_circuit(c, "1", 2)
    vals = np.linalg.eigvalsh(dense(h))
    K = 6
    assert vals[0] == pytest.approx(0, abs=1e-10)
    assert vals[1] >= 1 / (7 * K**3)


def test_locality_cases():
    assert locality(compile_circuit(Circuit(2, 1, 0, (X(0), CNOT(0, 1), CNOT(1, 2))), "10")) <= 5
    mid = Circuit(2, 1, 0, (X(0), TOFFOLI(0, 1, 2), X(1)))
    assert locality(compile_circuit(mid, "10")) == 6
    single = Circuit(1, 0, 0, (X(0),))
    assert locality(compile_circuit(single, "1")) <= 5


@given(circuit_and_input(max_width=4, max_gates=6))
def test_clock_only_terms_are_small(cx):
    c, x = cx
    h = compile_circuit(c, x, 1)
    for t in h.terms:
        if t.label == "CLOCK":
            assert t.arity == 2
    assert locality(h) <= 6


def test_compile_cap():
    c = Circuit(1, 0, 0, (X(0),) * 5)
    with pytest.raises(ValueError):
        compile_circuit(c, "0", cap_qubits=5)


# --- output energy and perturbation ----------------------------------------

@given(circuit_and_input(max_width=3, max_gates=4), st.sampled_from(["last_clock", "projector"]))
def test_output_energy_matches_rejection_probability(cx, form):
    c, x = cx
    h = compile_circuit(c, x, 1)
    K = h.meta["K_hat"]
    if form == "projector" and K + 1 > 6:
        return
    out = Hamiltonian(h.n_total, (output_term(h, form),))
    labels, amps = history_state(c, x, 1)
    energy = sparse_expectation(out, labels, amps).real
    assert energy == pytest.approx(float(1 - acceptance_probability(c, x)) / (K + 1), abs=1e-12)


def test_always_accepting_and_rejecting_energies():
    yes, no = Circuit(1, 0, 0, (X(0),)), Circuit(1, 0, 0, (ID(0),))
    for c, expect in ((yes, 0.0), (no, 1.0)):
        h = compile_circuit(c, "0", 1)
        labels, amps = history_state(c, "0", 1)
        out = Hamiltonian(h.n_total, (output_term(h),))
        assert sparse_expectation(out, labels, amps).real == pytest.approx(expect / 3, abs=1e-15)


def test_always_accepting_below_a():
    c = Circuit(1, 0, 0, (X(0),))
    h = perturb(compile_circuit(c, "0", 1), PerturbationConfig.for_clock(2))
    lam = np.linalg.eigvalsh(dense(h))[0]
    assert lam <= h.meta["a"]


def test_perturb_requires_delta_bound():
    h = compile_circuit(Circuit(1, 0, 0, (X(0),)), "0", 1)
    with pytest.raises(HamiltonianError):
        perturb(h, PerturbationConfig(Delta=10.0))
    relaxed = perturb(h, PerturbationConfig(Delta=10.0, enforce_bound=False))
    assert relaxed.meta["Delta"] == 10.0


def test_perturb_normalisation_and_thresholds():
    h = compile_circuit(Circuit(1, 1, 0, (CNOT(0, 1), X(0))), "1", 1)
    cfg = PerturbationConfig.for_clock(3, f=2, slack=0.5)
    ht = perturb(h, cfg)
    assert np.linalg.norm(dense(ht), 2) <= 1 + 1e-12
    K, s = 3, ht.norm_scale
    assert ht.meta["a"] == pytest.approx(s * (0.25 / (K + 1) + 0.5 / cfg.Delta))
    assert ht.meta["b"] == pytest.approx(s * (0.75 / (K + 1) - 0.5 / cfg.Delta))
    assert is_stoquastic(ht)[0]


# --- guides ----------------------------------------------------------------

def test_guide_overlap_formula_q2_k5():
    c = Circuit(1, 1, 0, (CNOT(0, 1), X(1), X(0)))
    guide = guide_state(c, "1", 2, 2)
    labels, amps = history_state(c, "1", 2)
    _, sq = overlap(guide, to_dense(labels, amps, guide.M))
    assert sq == pytest.approx(0.5, abs=1e-12)


@given(circuit_and_input(max_width=3, max_gates=4), st.integers(0, 3), st.data())
def test_guide_overlap_all_q(cx, N, data):
    c, x = cx
    L = c.clean_prefix_length()
    K = c.K + N
    Q = data.draw(st.integers(0, min(N + L, K - 1)))
    eta = history_oracle(pre_idle(c, N), x)
    for encoding in ("isometry", "expand"):
        guide = guide_state(c, x, N, Q, encoding)
        assert overlap(guide, eta)[1] == pytest.approx((Q + 1) / (K + 1), abs=1e-12)
        trunc = history_oracle(pre_idle(c, N), x, upto=Q)
        assert np.allclose(guide.to_dense(), trunc, atol=1e-12)


def test_guide_uses_isometry_for_plus_ancillae():
    c = Circuit(1, 0, 1, (CNOT(1, 0),))
    guide = guide_state(c, "0", 1, 1)
    assert guide.encoded == (1,)
    assert guide.size == 2
    assert guide_state(c, "0", 1, 1, "expand").size == 4


def test_guided_instance_errors():
    c = Circuit(1, 0, 1, (CNOT(1, 0), X(0)))
    cfg = PerturbationConfig.for_clock(3)
    with pytest.raises(HamiltonianError, match="semi-classical"):
        build_guided_instance(c, "0", 1, 2, cfg)
    trivial = Circuit(1, 0, 0, (X(0),))
    with pytest.raises(HamiltonianError):
        build_guided_instance(trivial, "0", 0, 1, PerturbationConfig.for_clock(1))


def test_guided_instance_fields():
    c = Circuit(1, 0, 0, (X(0),))
    g = build_guided_instance(c, "0", 2, 1, PerturbationConfig.for_clock(3))
    assert g.expected == "yes"
    assert g.meta["raw_overlap"] == pytest.approx(0.5)
    assert 0 < g.delta <= 0.5
    assert g.b > g.a


def test_instance_round_trip(tmp_path):
    c = Circuit(1, 0, 1, (ID(0), CNOT(1, 0)))
    g = build_guided_instance(c, "1", 1, 1, PerturbationConfig.for_clock(3))
    save_instance(g, tmp_path / "inst.json")
    back = load_instance(tmp_path / "inst.json")
    assert back.a == g.a and back.b == g.b and back.delta == g.delta and back.expected == g.expected
    assert back.guide == g.guide
    assert np.array_equal(dense(back.ham), dense(g.ham))


def test_instance_schema_errors(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2]")
    with pytest.raises(HamiltonianError):
        load_instance(path)
    path.write_text(json.dumps({"hamiltonian": "x.ham", "guide": "x.sstate", "a": "low"}))
    with pytest.raises(HamiltonianError, match="'a'"):
        load_instance(path)
    with pytest.raises(HamiltonianError):
        GuidedInstance(pauli_hamiltonian(1, []), 0.1, 0.2, SubsetState.from_bits(["0"]), 1.0)


# --- file format -----------------------------------------------------------

@given(circuit_and_input(max_width=3, max_gates=3))
def test_hamiltonian_round_trip(cx):
    c, x = cx
    h = perturb(compile_circuit(c, x, 1), PerturbationConfig.for_clock(c.K + 1))
    back = parse_hamiltonian(format_hamiltonian(h))
    assert back.n_total == h.n_total and back.norm_scale == h.norm_scale
    assert np.array_equal(dense(back), dense(h))
    assert [t.label for t in back.terms] == [t.label for t in h.terms]


def test_hamiltonian_parse_errors():
    with pytest.raises(HamiltonianError, match="n_total"):
        parse_hamiltonian("norm_scale 1.0\n")
    with pytest.raises(HamiltonianError, match="line 2"):
        parse_hamiltonian("n_total 1\nterm USER 0 1 0 0\n")
    with pytest.raises(HamiltonianError, match="unknown record"):
        parse_hamiltonian("n_total 1\nfoo\n")


# --- pinning ---------------------------------------------------------------

@st.composite
def pin_hamiltonians(draw, max_n=4):
    n = draw(st.integers(1, max_n))
    coef = st.floats(-2, 2, allow_nan=False).filter(lambda v: abs(v) > 1e-6)
    paulis = []
    for q in range(n):
        paulis.append((draw(coef), "X", (q,)))
        paulis.append((draw(coef), "Z", (q,)))
    for u in range(n):
        for v in range(u + 1, n):
            if draw(st.booleans()):
                paulis.append((draw(coef), draw(st.sampled_from(["XX", "ZZ"])), (u, v)))
    return pauli_hamiltonian(n, paulis)


def minus_block(h, q):
    from stoqforge.numerics import pinned_block

    return pinned_block(h, q, "-").toarray()


def test_pin_plus_x():
    h2 = pauli_hamiltonian(1, [(1.0, "X", (0,))])
    hp, q = pin_embed(h2)
    assert q == 1
    assert np.allclose(dense(hp), -np.kron(pauli_matrix("X"), pauli_matrix("X")))
    assert np.linalg.eigvalsh(minus_block(hp, q))[0] == pytest.approx(-1.0)


def test_pin_already_stoquastic():
    h2 = pauli_hamiltonian(2, [(-0.5, "X", (0,)), (0.8, "ZZ", (0, 1)), (0.3, "Z", (1,))])
    hp, q = pin_embed(h2)
    assert all(t.label == "USER" for t in hp.terms)
    assert np.allclose(dense(hp), np.kron(np.eye(2), dense(h2)))
    assert np.allclose(np.linalg.eigvalsh(minus_block(hp, q)), np.linalg.eigvalsh(dense(h2)))


@given(pin_hamiltonians(max_n=3))
def test_pin_blocks(h2):
    hp, q = pin_embed(h2)
    assert is_stoquastic(hp)[0]
    assert locality(hp) <= 3
    assert np.allclose(minus_block(hp, q), dense(h2), atol=1e-12)
    from stoqforge.numerics import pinned_block

    plus = pinned_block(hp, q, "+").toarray()
    # V - P on |+>, V + P on |->
    V = (plus + dense(h2)) / 2
    P = (dense(h2) - plus) / 2
    offdiag = V - np.diag(np.diag(V))
    assert np.all(offdiag <= 1e-12)
    assert np.all(P >= -1e-12)


def test_pin_rejects_other_interactions():
    with pytest.raises(HamiltonianError):
        pin_embed(pauli_hamiltonian(2, [(1.0, "XZ", (0, 1))]))
    with pytest.raises(HamiltonianError):
        pin_embed(pauli_hamiltonian(1, [(1.0, "Y", (0,))]))


def test_pauli_decompose_round_trip(rng):
    mat = rng.normal(size=(4, 4))
    term = LocalTerm((2, 5), mat + mat.T)
    coeffs = pauli_decompose(term)
    rebuilt = np.zeros((4, 4), dtype=complex)
    for (word, qs), coef in coeffs.items():
        full = "".join(word[qs.index(q)] if q in qs else "I" for q in term.qubits)
        rebuilt += coef * pauli_matrix(full)
    assert np.allclose(rebuilt, term.matrix)


# --- diagonal solver -------------------------------------------------------

def test_solve_diag_single_z():
    h = pauli_hamiltonian(1, [(1.0, "Z", (0,))])
    assert solve_diagonal(h, SubsetState.from_bits(["0", "1"])) == (-1.0, "1")


def test_solve_diag_zz():
    h = pauli_hamiltonian(2, [(1.0, "ZZ", (0, 1))])
    assert solve_diagonal(h, SubsetState.from_bits(["00", "01"])) == (-1.0, "01")


def test_solve_diag_tie_break():
    h = pauli_hamiltonian(2, [(1.0, "Z", (0,))])
    assert solve_diagonal(h, SubsetState.from_bits(["11", "10", "01"]))[1] == "10"


def test_solve_diag_random_twelve_qubits(rng):
    n = 12
    terms = [LocalTerm(tuple(int(q) for q in rng.choice(n, 2, replace=False)), np.diag(rng.normal(size=4)))
             for _ in range(20)]
    h = Hamiltonian(n, tuple(terms))
    members = rng.choice(2**n, 50, replace=False)
    s = SubsetState(n, tuple(int(v) for v in members), SubsetState.from_bits(["0" * n]).isometries)
    diag = assemble(h).diagonal().real
    energy, best = solve_diagonal(h, s)
    assert energy == pytest.approx(diag[members].min(), abs=1e-12)
    assert diagonal_energies(h, s.members) == pytest.approx(diag[list(s.members)])


def test_solve_diag_rejects_offdiagonal():
    with pytest.raises(HamiltonianError):
        solve_diagonal(pauli_hamiltonian(1, [(1.0, "X", (0,))]), SubsetState.from_bits(["0"]))


# --- simulator thresholds --------------------------------------------------

def test_simulator_thresholds():
    assert simulator_thresholds(0.1, 0.5, SimulatorParams(0.0, 0.1)) == pytest.approx((0.2, 0.4))
    assert simulator_thresholds(0.1, 0.5, SimulatorParams(0.0, 0.0)) == (0.1, 0.5)
    with pytest.raises(HamiltonianError):
        simulator_thresholds(0.1, 0.5, SimulatorParams(0.0, 0.2))


def test_initial_vector_oracle_consistency():
    c = Circuit(1, 1, 1, (X(0),))
    vec = initial_vector(c, "1")
    assert np.flatnonzero(vec).tolist() == [0b001, 0b101]
