import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subspace_qaoa.errors import NumericalIntegrityError, StructuralError
from subspace_qaoa.pauli import apply, pauli_sum, to_dense
from subspace_qaoa.problems import (
    ConstraintSpec,
    cost_hamiltonian,
    graph_family,
    hamming_weights,
    initial_state,
    maxcut_to_qubo,
    mixer_hamiltonian,
    random_qubo,
)
from subspace_qaoa.reduction import (
    account,
    build_isometry,
    corrupt_isometry,
    find_subspace,
    induce_hamiltonians,
    krylov_closure,
    load_subspace,
    lumped_subspace,
    qubit_count,
    save_subspace,
    subspace_from_basis,
    symmetric_subspace,
)


def maxcut(family, n, seed=0, constraint=ConstraintSpec()):
    hc = cost_hamiltonian(maxcut_to_qubo(graph_family(family, n, seed)))
    return hc, mixer_hamiltonian(n, constraint), initial_state(n, constraint)


def test_generic_single_qubit_is_not_reduced():
    hc = pauli_sum(1, [(0.5, "I"), (-0.5, "Z")])
    hm = pauli_sum(1, [(1, "X")])
    sub = krylov_closure(hc, hm, initial_state(1))
    assert sub.M == 2


def test_single_edge_never_reaches_singlet():
    hc, hm, psi0 = maxcut("complete", 2)
    singlet = np.array([0, 1, -1, 0]) / math.sqrt(2)
    kry = krylov_closure(hc, hm, psi0)
    sym = symmetric_subspace(hc, hm, psi0)
    assert sym.M == 3
    # the closure also respects the global bit flip, which removes one more direction
    assert kry.M == 2
    for sub in (kry, sym):
        assert np.linalg.norm(sub.basis.conj().T @ singlet) < 1e-12


@pytest.mark.parametrize("n", [3, 4, 5, 6, 8])
def test_complete_graph_dimensions(n):
    hc, hm, psi0 = maxcut("complete", n)
    assert symmetric_subspace(hc, hm, psi0).M == n + 1
    assert krylov_closure(hc, hm, psi0).M == n // 2 + 1


def test_symmetric_basis_rejected_without_permutation_symmetry():
    hc, hm, psi0 = maxcut("cycle", 5)
    with pytest.raises(NumericalIntegrityError):
        symmetric_subspace(hc, hm, psi0)


def test_qubit_count_examples():
    assert qubit_count(13) == 4
    assert qubit_count(1) == 0
    assert qubit_count(924) == 10
    assert [qubit_count(M) for M in (2, 3, 4, 5, 8, 9)] == [1, 2, 2, 3, 3, 4]
    with pytest.raises(StructuralError):
        qubit_count(0)
    acc = account(12, 13)
    assert (acc.m, acc.savings, acc.compression_ratio) == (4, 8, Fraction(4096, 13))


def test_square_isometry_is_unitary_onto_subspace():
    hc, hm, psi0 = maxcut("cycle", 6)
    sub = krylov_closure(hc, hm, psi0)
    assert sub.M == 8
    iso = build_isometry(sub)
    V = iso.padded()
    np.testing.assert_allclose(V.conj().T @ V, np.eye(8), atol=1e-12)


def test_rank_three_projector():
    hc, hm, psi0 = maxcut("complete", 2)
    iso = build_isometry(symmetric_subspace(hc, hm, psi0))
    assert (iso.M, iso.m) == (3, 2)
    V = iso.padded()
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(V @ V.conj().T)), [0, 1, 1, 1], atol=1e-12)
    for k in range(3):
        e = np.zeros(4)
        e[k] = 1
        np.testing.assert_array_equal(V @ e, iso.reference_basis[:, k])
    np.testing.assert_allclose(V @ np.eye(4)[3], 0)


def test_weight_sector_compression_is_diagonal():
    n, k = 5, 2
    con = ConstraintSpec("hamming_weight", k)
    q = maxcut_to_qubo(graph_family("erdos_renyi", n, 3))
    hc, hm, psi0 = cost_hamiltonian(q), mixer_hamiltonian(n, con), initial_state(n, con)
    idx = np.flatnonzero(hamming_weights(n) == k)
    sub = subspace_from_basis(hc, hm, psi0, np.eye(2**n)[:, idx], method="sector")
    red = induce_hamiltonians(hc, hm, build_isometry(sub))
    np.testing.assert_allclose(red.hc_red, np.diag(q.all_values()[idx]), atol=1e-12)


def test_single_edge_reduced_spectrum():
    hc, hm, psi0 = maxcut("complete", 2)
    sub = symmetric_subspace(hc, hm, psi0)
    red = induce_hamiltonians(hc, hm, build_isometry(sub))
    ev = np.linalg.eigvalsh(red.hc_red)
    assert all(min(abs(e - 0), abs(e + 1)) < 1e-12 for e in ev)
    assert np.trace(red.hc_red) == pytest.approx(np.trace(sub.projector() @ to_dense(hc)).real)


def test_reduced_system_padding():
    hc, hm, psi0 = maxcut("complete", 4)
    sub = symmetric_subspace(hc, hm, psi0)
    red = induce_hamiltonians(hc, hm, build_isometry(sub))
    assert (red.M, red.m) == (5, 3)
    P = red.padded_hc()
    assert P.shape == (8, 8)
    np.testing.assert_array_equal(P[5:], 0)
    np.testing.assert_array_equal(P[:, 5:], 0)
    np.testing.assert_array_equal(red.padded_psi0()[5:], 0)
    iso = build_isometry(sub)
    np.testing.assert_allclose(iso.embed(red.padded_psi0()), psi0, atol=1e-12)
    np.testing.assert_allclose(iso.embed(red.psi0_red), psi0, atol=1e-12)


def test_krylov_rejects_unnormalized_state():
    hc, hm, psi0 = maxcut("cycle", 4)
    with pytest.raises(StructuralError):
        krylov_closure(hc, hm, 2 * psi0)
    with pytest.raises(StructuralError):
        find_subspace(hc, hm, psi0, "magic")


def test_lumped_contains_krylov():
    hc, hm, psi0 = maxcut("cycle", 8)
    kry = krylov_closure(hc, hm, psi0)
    lum = lumped_subspace(hc, hm, psi0)
    assert (kry.M, lum.M) == (16, 18)
    assert np.linalg.norm(kry.basis - lum.project(kry.basis)) < 1e-10


def test_corrupted_isometry_is_detected():
    hc, hm, psi0 = maxcut("complete", 4)
    iso = build_isometry(symmetric_subspace(hc, hm, psi0))
    bad = corrupt_isometry(iso, 1e-3)
    assert bad.ortho_residual > 1e-6
    assert bad.projector_residual > 1e-6
    assert iso.ortho_residual < 1e-12


def test_subspace_roundtrip(tmp_path):
    con = ConstraintSpec("hamming_weight", 2)
    hc, hm, psi0 = maxcut("erdos_renyi", 5, 4, con)
    sub = krylov_closure(hc, hm, psi0)
    save_subspace(tmp_path / "s.json", sub)
    back = load_subspace(tmp_path / "s.json")
    np.testing.assert_array_equal(back.basis, sub.basis)
    np.testing.assert_array_equal(back.psi0, sub.psi0)
    assert back.method == sub.method


cases = st.one_of(
    st.tuples(st.sampled_from(["cycle", "complete", "erdos_renyi"]), st.integers(2, 8),
              st.integers(0, 2**32), st.just(None)),
    st.integers(3, 7).flatmap(lambda n: st.tuples(
        st.sampled_from(["cycle", "erdos_renyi"]), st.just(n), st.integers(0, 2**32), st.integers(1, n - 1))),
)


def build_case(case):
    family, n, seed, k = case
    con = ConstraintSpec() if k is None else ConstraintSpec("hamming_weight", k)
    return maxcut(family, n, seed, con)


@settings(max_examples=30)
@given(cases)
def test_subspace_invariants(case):
    hc, hm, psi0 = build_case(case)
    sub = krylov_closure(hc, hm, psi0)
    assert sub.orthonormality_error() < 1e-10
    assert sub.closure_residual(hc, hm) < 1e-9
    assert sub.containment_residual() < 1e-12
    iso = build_isometry(sub)
    ortho, proj = iso.isometry_residuals
    assert ortho <= 1e-12 and proj <= 1e-10
    red = induce_hamiltonians(hc, hm, iso)
    np.testing.assert_allclose(red.hc_red, red.hc_red.conj().T, atol=1e-12)
    assert np.linalg.norm(red.psi0_red) == pytest.approx(1, abs=1e-12)
    np.testing.assert_allclose(iso.embed(red.psi0_red), psi0, atol=1e-12)
    # projector commutes with both Hamiltonians
    Pi = sub.projector()
    for op in (hc, hm):
        H = to_dense(op)
        assert np.linalg.norm(Pi @ H - H @ Pi) <= 1e-9
    # spectral containment
    full = np.linalg.eigvalsh(to_dense(hc))
    for e in np.linalg.eigvalsh(red.hc_red):
        assert np.min(np.abs(full - e)) < 1e-9


@settings(max_examples=15)
@given(cases)
def test_krylov_is_minimal_and_deterministic(case):
    hc, hm, psi0 = build_case(case)
    sub = krylov_closure(hc, hm, psi0)
    again = krylov_closure(hc, hm, psi0)
    np.testing.assert_allclose(again.basis, sub.basis, atol=1e-14, rtol=0)
    if sub.M < 2:
        return
    # dropping any basis direction breaks closure or containment
    for j in range(sub.M):
        keep = np.delete(sub.basis, j, axis=1)
        proj = lambda v: keep @ (keep.conj().T @ v)
        broken = np.linalg.norm(psi0 - proj(psi0)) > 1e-9
        for op in (hc, hm):
            img = apply(op, keep)
            broken |= np.max(np.linalg.norm(img - proj(img), axis=0), initial=0) > 1e-9
        assert broken


@settings(max_examples=15)
@given(st.integers(2, 5), st.integers(0, 2**32))
def test_random_qubo_explores_full_space(n, seed):
    hc = cost_hamiltonian(random_qubo(n, seed))
    sub = krylov_closure(hc, mixer_hamiltonian(n), initial_state(n))
    assert sub.M == 2**n
