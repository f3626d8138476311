import json
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schrolab.pauli import (DimensionError, PauliOperator, PauliString, TimHamiltonian,
                            exact_propagate, exact_propagator, exact_spectrum, load_tim,
                            random_tim, save_tim, to_dense, z_conjugate)

I2 = np.eye(2)
X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.diag([1.0, -1.0])


def kron_build(H: TimHamiltonian) -> np.ndarray:
    """Independent Kronecker-product construction of a TIM Hamiltonian."""
    def at(ops):
        mats = [I2] * H.n
        for q, m in ops.items():
            mats[q] = m
        return reduce(np.kron, mats)
    out = sum(H.a[u] * at({u: X}) + H.b[u] * at({u: Z}) for u in range(H.n))
    for u, v, c in H.bzz:
        out = out + c * at({u: Z, v: Z})
    return out


def test_single_z_is_diag():
    op = PauliOperator.from_terms(1, [(1.0, "Z")])
    np.testing.assert_array_equal(to_dense(op), np.diag([1.0, -1.0]))


def test_tim_one_qubit_spectrum_analytic():
    w, _ = exact_spectrum(TimHamiltonian(1, (3.0,), (4.0,)))
    np.testing.assert_allclose(w, [-5.0, 5.0], atol=1e-13)


def test_two_qubit_matches_kronecker_oracle():
    H = TimHamiltonian(2, (1.0, 1.0), (0.0, 0.0), ((0, 1, 1.0),))
    np.testing.assert_allclose(exact_spectrum(H)[0], np.linalg.eigvalsh(kron_build(H)),
                               atol=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_random_tim_dense_matches_oracle(seed):
    H = random_tim(3, np.random.default_rng(seed))
    np.testing.assert_allclose(to_dense(H), kron_build(H), atol=1e-14)


def test_x_eigenvectors():
    w, v = exact_spectrum(PauliOperator.from_terms(1, [(1.0, "X")]))
    np.testing.assert_allclose(w, [-1.0, 1.0], atol=1e-14)
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    assert abs(abs(v[:, 0] @ minus) - 1.0) < 1e-12


def test_zz_spectrum():
    w, _ = exact_spectrum(PauliOperator.from_terms(2, [(1.0, "ZZ")]))
    np.testing.assert_allclose(w, [-1, -1, 1, 1], atol=1e-14)


@pytest.mark.parametrize("seed", range(4))
def test_exact_spectrum_residuals_and_cross_solver(seed):
    H = random_tim(3, np.random.default_rng(100 + seed))
    M = to_dense(H)
    w, v = exact_spectrum(H)
    assert np.all(np.diff(w) >= 0)
    scale = np.linalg.norm(M, 2)
    assert np.linalg.norm(M @ v - v * w, axis=0).max() <= 1e-10 * scale
    np.testing.assert_allclose(w, np.linalg.eigvals(M).real[np.argsort(np.linalg.eigvals(M).real)],
                               atol=1e-10)


def test_propagate_t0_identity():
    psi = np.array([0.6, 0.8j])
    out = exact_propagate(TimHamiltonian(1, (1.0,), (0.3,)), 0.0, psi)
    np.testing.assert_allclose(out, psi, atol=1e-15)


@pytest.mark.parametrize("t", [0.1, 1.0, 7.3])
def test_z_on_zero_is_phase(t):
    out = exact_propagate(PauliOperator.from_terms(1, [(1.0, "Z")]), t, [1.0, 0.0])
    assert abs(abs(out[0]) - 1.0) < 1e-12
    np.testing.assert_allclose(out[0], np.exp(-1j * t), atol=1e-12)


def test_rabi_flip():
    out = exact_propagate(PauliOperator.from_terms(1, [(1.0, "X")]), np.pi / 2, [1.0, 0.0])
    assert abs(abs(out[1]) - 1.0) < 1e-12


def test_non_normalized_rejected():
    with pytest.raises(ValueError):
        exact_propagate(TimHamiltonian(1, (1.0,), (0.0,)), 1.0, [1.0, 1.0])


def test_dimension_cap():
    with pytest.raises(DimensionError):
        to_dense(PauliOperator.from_terms(15, [(1.0, "Z" + "I" * 14)]))


def test_identical_strings_merge():
    op = PauliOperator.from_terms(2, [(1.0, "XZ"), (2.5, "XZ")])
    assert len(op.terms) == 1
    np.testing.assert_allclose(to_dense(op), 3.5 * np.kron(X, Z))


def test_invalid_tim_rejected():
    with pytest.raises(ValueError):
        TimHamiltonian(2, (1.0, 1.0), (0.0, 0.0), ((1, 0, 1.0),))
    with pytest.raises(ValueError):
        TimHamiltonian(1, (np.inf,), (0.0,))


def test_json_roundtrip(tmp_path):
    H = random_tim(3, np.random.default_rng(3))
    assert TimHamiltonian.from_json(json.dumps(H.to_json())) == H
    save_tim(H, tmp_path / "h.json")
    assert load_tim(tmp_path / "h.json") == H


def test_qubit_zero_is_most_significant():
    op = PauliOperator.from_terms(2, [(1.0, "ZI")])
    np.testing.assert_array_equal(np.diag(to_dense(op)), [1, 1, -1, -1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(-3, 3), beta=st.floats(-3, 3))
def test_to_dense_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    A, B = random_tim(3, rng).to_pauli(), random_tim(3, rng).to_pauli()
    lhs = to_dense(A * alpha + B * beta)
    rhs = alpha * to_dense(A) + beta * to_dense(B)
    assert np.abs(lhs - rhs).max() <= 1e-13 * max(1.0, np.abs(rhs).max())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.floats(0, 5), t=st.floats(0, 5))
def test_propagation_unitary_and_group(seed, s, t):
    rng = np.random.default_rng(seed)
    H = random_tim(2, rng)
    psi = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    psi /= np.linalg.norm(psi)
    out = exact_propagate(H, t, psi)
    assert abs(np.linalg.norm(out) - 1.0) <= 1e-12
    np.testing.assert_allclose(exact_propagator(H, s + t),
                               exact_propagator(H, s) @ exact_propagator(H, t), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 3), data=st.data())
def test_z_conjugation_preserves_spectrum(seed, n, data):
    H = random_tim(n, np.random.default_rng(seed))
    qubits = data.draw(st.sets(st.integers(0, n - 1)))
    Hc = z_conjugate(H, qubits)
    for u in range(n):
        assert Hc.a[u] == (-H.a[u] if u in qubits else H.a[u])
    np.testing.assert_allclose(exact_spectrum(Hc)[0], exact_spectrum(H)[0], atol=1e-12)
