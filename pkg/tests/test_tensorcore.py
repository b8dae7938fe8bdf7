import numpy as np
import pytest
from hypothesis import given, strategies as st

from romcontrol.errors import InvalidInputError
from romcontrol.models import SX, SZ
from romcontrol.tensorcore import (
    apply_to_axes,
    density_spectrum,
    eigh,
    expm_hermitian,
    kron,
    partial_trace,
    svd,
    trace_distance,
    von_neumann_entropy,
)

from conftest import random_complex


def test_svd_identity():
    _, s, _ = svd(np.eye(4))
    assert np.allclose(s, 1.0)


def test_svd_rank_deficient_diagonal():
    u, s, vh = svd(np.diag([3.0, 0.0]))
    assert np.allclose(s, [3.0, 0.0])
    assert np.allclose(np.abs(u), np.eye(2))
    assert np.allclose(np.abs(vh), np.eye(2))


def test_svd_rejects_nan():
    with pytest.raises(InvalidInputError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**31))
def test_svd_reconstruction(m, n, seed):
    a = random_complex(np.random.default_rng(seed), m, n)
    u, s, vh = svd(a)
    assert np.linalg.norm(u @ np.diag(s) @ vh - a) <= 1e-12 * np.linalg.norm(a)
    assert np.all(np.diff(s) <= 0)
    assert np.allclose(u.conj().T @ u, np.eye(u.shape[1]), atol=1e-12)
    assert np.allclose(vh @ vh.conj().T, np.eye(vh.shape[0]), atol=1e-12)
    # phase convention: the largest entry of every left vector is real positive
    piv = u[np.argmax(np.abs(u), axis=0), np.arange(u.shape[1])]
    assert np.allclose(piv.imag, 0, atol=1e-12) and np.all(piv.real > 0)


def test_eigh_pauli_z():
    lam, _ = eigh(SZ)
    assert np.allclose(lam, [1, -1])


def test_eigh_identity():
    lam, _ = eigh(np.eye(2))
    assert np.allclose(lam, [1, 1])


def test_eigh_plus_projector():
    plus = np.array([1, 1]) / np.sqrt(2)
    lam, v = eigh(np.outer(plus, plus))
    assert np.allclose(lam, [1, 0], atol=1e-14)
    assert np.isclose(abs(np.vdot(v[:, 0], plus)), 1.0)


def test_eigh_rejects_non_hermitian():
    with pytest.raises(InvalidInputError):
        eigh(np.array([[0, 1], [0, 0]]))


@given(st.integers(1, 16), st.integers(0, 2**31))
def test_eigh_reconstruction(n, seed):
    a = random_complex(np.random.default_rng(seed), n, n)
    h = a + a.conj().T
    lam, v = eigh(h)
    assert np.all(np.diff(lam) <= 0)
    assert np.allclose(h @ v, v * lam, atol=1e-10 * max(1, np.abs(lam).max()))
    assert np.allclose(v.conj().T @ v, np.eye(n), atol=1e-12)


def test_density_spectrum_clips_and_rejects():
    lam, _ = density_spectrum(np.diag([1.0, -1e-13]))
    assert lam.min() == 0.0
    with pytest.raises(InvalidInputError):
        density_spectrum(np.diag([1.1, -0.1]))


def test_expm_zero_time():
    assert np.allclose(expm_hermitian(SX, 0.0), np.eye(2))


@given(st.floats(-10, 10))
def test_expm_pauli_closed_form(theta):
    expected = np.cos(theta) * np.eye(2) - 1j * np.sin(theta) * SX
    assert np.allclose(expm_hermitian(SX, theta), expected, atol=1e-12)


@given(st.integers(1, 8), st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_expm_unitary_and_group_law(n, seed, t1, t2):
    a = random_complex(np.random.default_rng(seed), n, n)
    h = a + a.conj().T
    u1, u2 = expm_hermitian(h, t1), expm_hermitian(h, t2)
    assert np.allclose(u1.conj().T @ u1, np.eye(n), atol=1e-10)
    assert np.allclose(u1 @ u2, expm_hermitian(h, t1 + t2), atol=1e-10)


def test_apply_to_axes_matches_kron(rng):
    psi = random_complex(rng, 2, 2, 2)
    op = random_complex(rng, 4, 4)
    out = apply_to_axes(op, psi, (1, 2))
    assert np.allclose(out.reshape(-1), kron(np.eye(2), op) @ psi.reshape(-1))


def test_partial_trace_product(rng):
    a = np.diag([0.25, 0.75])
    b = np.array([[0.5, 0.5j], [-0.5j, 0.5]])
    rho = np.kron(a, b)
    assert np.allclose(partial_trace(rho, (2, 2), (0,)), a)
    assert np.allclose(partial_trace(rho, (2, 2), (1,)), b)


def test_entropy_and_trace_distance():
    assert np.isclose(von_neumann_entropy(np.eye(2) / 2), 1.0)
    assert np.isclose(von_neumann_entropy(np.diag([1.0, 0.0])), 0.0)
    assert np.isclose(trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])), 1.0)
