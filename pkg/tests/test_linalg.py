import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from tnqml import linalg

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def random_density(n, rng):
    a = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("dim", [1, 2, 4, 8])
def test_hermitian_layout_matches_oracle(dim):
    values = np.random.default_rng(dim).normal(size=dim * dim)
    np.testing.assert_array_equal(linalg.hermitian_from_params(values), oracles.hermitian(values, dim))


def test_hermitian_layout_by_hand():
    h = linalg.hermitian_from_params([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(h, [[1, 3 + 4j], [3 - 4j, 2]])


@settings(max_examples=50, deadline=None)
@given(arrays(float, 16, elements=finite))
def test_params_round_trip(values):
    h = linalg.hermitian_from_params(values)
    np.testing.assert_array_equal(linalg.params_from_hermitian(h), values)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 16, elements=finite))
def test_exponential_is_unitary_and_matches_expm(values):
    u = linalg.unitaries_from_params(values, 4)[0]
    assert linalg.is_unitary(u)
    expected = scipy.linalg.expm(1j * oracles.hermitian(values, 4))
    assert np.max(np.abs(u - expected)) < 1e-10


def test_zero_generator_gives_identity():
    np.testing.assert_allclose(linalg.unitaries_from_params(np.zeros(32), 4), np.stack([np.eye(4)] * 2), atol=1e-15)


def test_bad_parameter_lengths():
    with pytest.raises(ValueError):
        linalg.hermitian_from_params(np.zeros(5))
    with pytest.raises(ValueError):
        linalg.unitaries_from_params(np.zeros(17), 4)
    with pytest.raises(ValueError):
        linalg.unitary_from_hermitian(np.array([[0, 1], [0, 0]]))


def test_num_qubits():
    assert linalg.num_qubits(1) == 0
    assert linalg.num_qubits(16) == 4
    with pytest.raises(ValueError):
        linalg.num_qubits(6)


def test_batched_kron_matches_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(3, 2, 2)), rng.normal(size=(3, 4, 4))
    out = linalg.kron(a, b)
    for i in range(3):
        np.testing.assert_allclose(out[i], np.kron(a[i], b[i]))


@pytest.mark.parametrize("targets", [[0], [2], [1, 0], [0, 2], [2, 1, 0], [3, 1]])
def test_conjugate_matches_embedding(targets):
    rng = np.random.default_rng(len(targets))
    n = 4
    rho = random_density(n, rng)
    u = linalg.unitaries_from_params(rng.normal(size=4 ** len(targets)), 2 ** len(targets))[0]
    full = oracles.embed(u, targets, n)
    assert np.max(np.abs(linalg.apply_unitary(rho, u, targets) - full @ rho @ full.conj().T)) < 1e-12


def test_conjugate_rejects_bad_targets():
    rho = linalg.zero_density(2)
    with pytest.raises(ValueError):
        linalg.conjugate(rho, np.eye(4), [0, 0])
    with pytest.raises(ValueError):
        linalg.conjugate(rho, np.eye(2), [2])
    with pytest.raises(ValueError):
        linalg.conjugate(rho, np.eye(4), [0])
    with pytest.raises(ValueError):
        linalg.apply_unitary(rho, np.ones((2, 2)), [0])


@pytest.mark.parametrize("keep", [[0], [3], [1, 2], [2, 0], [0, 1, 2, 3], [3, 0, 1]])
def test_partial_trace_matches_index_sum(keep):
    rho = random_density(4, np.random.default_rng(7))
    expected = oracles.partial_trace(rho, keep, 4)
    assert np.max(np.abs(linalg.partial_trace(rho, keep) - expected)) < 1e-12


def test_partial_trace_of_product():
    rng = np.random.default_rng(3)
    a, b = random_density(1, rng), random_density(2, rng)
    np.testing.assert_allclose(linalg.partial_trace(np.kron(a, b), [0]), a, atol=1e-14)
    np.testing.assert_allclose(linalg.partial_trace(np.kron(a, b), [1, 2]), b, atol=1e-14)


def test_projection_and_probabilities():
    rng = np.random.default_rng(11)
    rho = random_density(3, rng)
    total = 0.0
    for outcome in (0, 1):
        prob, post = linalg.project_qubit(rho, 1, outcome)
        total += prob
        linalg.check_density_matrix(post)
        assert abs(linalg.partial_trace(post, [1])[outcome, outcome] - 1) < 1e-12
    assert abs(total - 1) < 1e-12


def test_projection_of_impossible_outcome():
    prob, post = linalg.project_qubit(linalg.zero_density(2), 0, 1)
    assert prob == 0 and post is None
    probs, posts = linalg.project_qubit(np.stack([linalg.zero_density(1)] * 2), 0, np.array([0, 1]))
    np.testing.assert_array_equal(probs, [1, 0])
    assert not np.any(posts[1])


def test_reset_and_prepare():
    rng = np.random.default_rng(5)
    rho = random_density(2, rng)
    reset = linalg.reset_qubit(rho, 1)
    np.testing.assert_allclose(linalg.partial_trace(reset, [1]), [[1, 0], [0, 0]], atol=1e-14)
    np.testing.assert_allclose(linalg.partial_trace(reset, [0]), linalg.partial_trace(rho, [0]), atol=1e-14)
    theta = 0.3
    amp = np.array([np.cos(theta), np.sin(theta)])
    loaded = linalg.prepare_qubit(rho, 0, amp)
    np.testing.assert_allclose(linalg.partial_trace(loaded, [0]), np.outer(amp, amp), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_operations_keep_valid_states(seed):
    rng = np.random.default_rng(seed)
    rho = random_density(3, rng)
    u = linalg.unitaries_from_params(rng.normal(size=16), 4)[0]
    out = linalg.apply_unitary(rho, u, [2, 0])
    linalg.check_density_matrix(out)
    linalg.check_density_matrix(linalg.reset_qubit(out, 1))
    linalg.check_density_matrix(linalg.partial_trace(out, [1]))


def test_check_density_matrix_rejects():
    with pytest.raises(ValueError):
        linalg.check_density_matrix(np.eye(2))
    with pytest.raises(ValueError):
        linalg.check_density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        linalg.check_density_matrix(np.array([[0.5, 0.5], [0, 0.5]]))


def test_statevector_unitary_matches_embedding():
    rng = np.random.default_rng(2)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    u = linalg.unitaries_from_params(rng.normal(size=16), 4)[0]
    np.testing.assert_allclose(linalg.apply_unitary_to_state(psi, u, [2, 0]), oracles.embed(u, [2, 0], 3) @ psi, atol=1e-12)
