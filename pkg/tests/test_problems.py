import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subspace_qaoa.errors import ConstraintError, StructuralError
from subspace_qaoa.pauli import apply, commutator, pauli_sum, to_dense
from subspace_qaoa.problems import (
    ConstraintSpec,
    GraphInstance,
    Instance,
    QuadraticForm,
    QuboInstance,
    basis_bits,
    brute_force_minimum,
    cost_hamiltonian,
    graph_family,
    hamming_weights,
    initial_state,
    instance_for,
    load_instance,
    maxcut_to_qubo,
    mixer_hamiltonian,
    random_qubo,
    save_instance,
)
from subspace_qaoa.rng import SplitMix64, derive_seed


def test_splitmix64_reference_stream():
    # published reference outputs for seed 0
    r = SplitMix64(0)
    assert [r.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F,
    ]


def test_derive_seed_is_order_sensitive():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(33, 12) < 2**64


def test_single_edge_objective():
    q = maxcut_to_qubo(graph_family("complete", 2))
    values = {b: q.objective_value([int(c) for c in b]) for b in ("00", "01", "10", "11")}
    assert values == {"00": 0, "01": -1, "10": -1, "11": 0}


def test_triangle_and_k4_minima():
    q3 = maxcut_to_qubo(graph_family("complete", 3))
    vals = q3.all_values()
    assert vals.min() == -2
    assert np.count_nonzero(vals == -2) == 6
    assert brute_force_minimum(maxcut_to_qubo(graph_family("complete", 4))) == -4


def test_cost_hamiltonian_examples():
    hc = cost_hamiltonian(maxcut_to_qubo(graph_family("complete", 2)))
    assert hc == pauli_sum(2, [(-0.5, "II"), (0.5, "ZZ")])
    single = QuboInstance(np.zeros((1, 1)), np.array([1.0]), 0.0)
    assert cost_hamiltonian(single) == pauli_sum(1, [(0.5, "I"), (-0.5, "Z")])
    k3 = cost_hamiltonian(maxcut_to_qubo(graph_family("complete", 3)))
    np.testing.assert_allclose(k3.diagonal(), [0, -2, -2, -2, -2, -2, -2, 0])


def test_mixer_examples():
    assert mixer_hamiltonian(2) == pauli_sum(2, [(1, "XI"), (1, "IX")])
    xy = mixer_hamiltonian(3, ConstraintSpec("hamming_weight", 1))
    expected = pauli_sum(3, [(0.5, w) for w in ("XXI", "YYI", "IXX", "IYY", "XIX", "YIY")])
    assert xy == expected
    assert xy.is_hermitian


def test_xy_mixer_conserves_total_z():
    for n in (3, 4, 5):
        xy = mixer_hamiltonian(n, ConstraintSpec("hamming_weight", 1))
        total_z = pauli_sum(n, [(1, "".join("Z" if q == i else "I" for q in range(n))) for i in range(n)])
        assert not commutator(xy, total_z)


def test_initial_states():
    np.testing.assert_allclose(initial_state(2), np.full(4, 0.5))
    d = initial_state(3, ConstraintSpec("hamming_weight", 1))
    expected = np.zeros(8)
    expected[[0b001, 0b010, 0b100]] = 1 / math.sqrt(3)
    np.testing.assert_allclose(d, expected)
    big = initial_state(12, ConstraintSpec("hamming_weight", 6))
    assert np.count_nonzero(big) == 924
    np.testing.assert_allclose(big[big != 0], 1 / math.sqrt(924))


def test_graph_families():
    assert graph_family("cycle", 4).edges == ((0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0))
    assert len(graph_family("complete", 4).edges) == 6
    assert graph_family("erdos_renyi", 6, 7).edges == graph_family("erdos_renyi", 6, 7).edges
    with pytest.raises(StructuralError):
        graph_family("star", 4)
    with pytest.raises(StructuralError):
        graph_family("cycle", 1)


def test_graph_validation():
    with pytest.raises(StructuralError):
        GraphInstance(3, ((1, 1, 1.0),))
    with pytest.raises(StructuralError):
        GraphInstance(3, ((0, 1, 1.0), (1, 0, 1.0)))
    with pytest.raises(StructuralError):
        GraphInstance(3, ((0, 3, 1.0),))


def test_constraint_validation():
    with pytest.raises(ConstraintError):
        ConstraintSpec("hamming_weight", None)
    with pytest.raises(ConstraintError):
        ConstraintSpec("parity", 1)
    with pytest.raises(ConstraintError):
        initial_state(3, ConstraintSpec("hamming_weight", 4))
    with pytest.raises(ConstraintError):
        mixer_hamiltonian(3, ConstraintSpec("hamming_weight", 5))


def test_penalty_terms_enter_objective():
    # (x0 + x1 - 1)^2 expanded as a quadratic form
    g = QuadraticForm(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([-2.0, -2.0]), 1.0)
    q = QuboInstance(np.zeros((2, 2)), np.zeros(2), 0.0, penalties=((3.0, g),))
    np.testing.assert_allclose(q.all_values(), [3.0, 0.0, 0.0, 3.0])
    np.testing.assert_allclose(cost_hamiltonian(q).diagonal(), q.all_values())


def test_qubo_is_symmetrized():
    q = QuboInstance(np.array([[0.0, 2.0], [0.0, 0.0]]), np.zeros(2), 0.0)
    np.testing.assert_array_equal(q.W, q.W.T)


@given(st.integers(1, 8), st.integers(0, 2**63))
def test_spectral_correspondence(n, seed):
    q = random_qubo(n, seed)
    hc = cost_hamiltonian(q)
    assert hc.is_diagonal
    np.testing.assert_allclose(hc.diagonal(), q.all_values(), atol=1e-10)
    if n <= 6:
        np.testing.assert_allclose(np.diag(to_dense(hc)).real, q.all_values(), atol=1e-10)


@given(st.sampled_from(["cycle", "complete", "erdos_renyi"]), st.integers(2, 9), st.integers(0, 2**63))
def test_maxcut_minimum_is_negative_max_cut(family, n, seed):
    g = graph_family(family, n, seed)
    q = maxcut_to_qubo(g)
    bits = basis_bits(n)
    cuts = np.array([g.cut_value(b) for b in bits])
    np.testing.assert_allclose(q.all_values(), -cuts, atol=1e-12)


@given(st.integers(2, 7), st.data())
def test_xy_mixer_preserves_weight(n, data):
    k = data.draw(st.integers(0, n))
    hm = mixer_hamiltonian(n, ConstraintSpec("hamming_weight", k))
    w = hamming_weights(n)
    for idx in np.flatnonzero(w == k):
        v = np.zeros(2**n)
        v[idx] = 1.0
        out = apply(hm, v)
        assert np.all(out[w != k] == 0)


@given(st.integers(1, 10), st.data())
def test_initial_state_normalized(n, data):
    k = data.draw(st.integers(0, n))
    assert np.linalg.norm(initial_state(n)) == pytest.approx(1.0, abs=1e-12)
    d = initial_state(n, ConstraintSpec("hamming_weight", k))
    assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(d[hamming_weights(n) == k], 1 / math.sqrt(math.comb(n, k)))


def test_instance_roundtrip(tmp_path):
    inst = instance_for("erdos_renyi", 6, 5, ConstraintSpec("hamming_weight", 2))
    save_instance(tmp_path / "g.json", inst)
    back = load_instance(tmp_path / "g.json")
    assert back.graph.edges == inst.graph.edges
    assert back.constraint == inst.constraint
    assert back.family == "erdos_renyi"
    qi = Instance(random_qubo(4, 9))
    save_instance(tmp_path / "q.json", qi)
    back = load_instance(tmp_path / "q.json")
    assert back.family == "qubo"
    np.testing.assert_allclose(back.qubo.all_values(), qi.qubo.all_values())


def test_weighted_graph_file(tmp_path):
    (tmp_path / "w.json").write_text('{"n": 3, "edges": [[0, 1, 2.5], [1, 2, 0.5]], "family": "custom"}')
    inst = load_instance(tmp_path / "w.json")
    assert brute_force_minimum(inst.qubo) == -3.0
