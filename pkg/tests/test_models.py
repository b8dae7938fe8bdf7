import numpy as np
import pytest
from hypothesis import given, strategies as st

from romcontrol.errors import InvalidInputError
from romcontrol.models import (
    I2,
    PAULIS,
    SZ,
    CircuitLayout,
    MBLParams,
    XYZParams,
    bloch_state,
    bond_position,
    build_mbl_layer,
    build_xyz_gate,
    mbl_floquet_dense,
    mbl_layout,
    product_state,
    sample_disorder,
    xyz_hamiltonian,
    xyz_layout,
)
from romcontrol.tensorcore import expm_hermitian, kron


def _site(op, i, n):
    return kron(*[op if j == i else I2 for j in range(n)])


def test_zero_tau_gives_identity():
    p = XYZParams(tau=0.0)
    for pos in ("left", "mid", "right", "single"):
        assert np.allclose(build_xyz_gate(p, pos), np.eye(4))


def test_default_gates_unitary(xyz_params):
    for pos in ("left", "mid", "right"):
        g = build_xyz_gate(xyz_params, pos)
        assert np.linalg.norm(g.conj().T @ g - np.eye(4)) <= 1e-10


def test_diagonal_mid_gate():
    hz, tau = 0.7, 0.3
    g = build_xyz_gate(XYZParams((0, 0, 0), (0, 0, hz), tau), "mid")
    z = np.array([1, -1])
    phases = np.exp(-1j * tau * hz * (0.5 * z[:, None] + 0.5 * z[None, :])).reshape(-1)
    assert np.allclose(g, np.diag(phases))


def test_unknown_position_rejected(xyz_params):
    with pytest.raises(InvalidInputError):
        build_xyz_gate(xyz_params, "centre")


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_field_weights_add_to_one_per_spin(xyz_params, n):
    """The bond Hamiltonians sum to the full chain Hamiltonian with one field per spin."""
    total = sum(
        kron(np.eye(2**b), xyz_hamiltonian(xyz_params, bond_position(b, n)), np.eye(2 ** (n - b - 2)))
        for b in range(n - 1)
    )
    ref = np.zeros((2**n, 2**n), dtype=complex)
    for jk, hk, s in zip(xyz_params.J, xyz_params.h, PAULIS):
        ref += sum(jk * _site(s, i, n) @ _site(s, i + 1, n) for i in range(n - 1))
        ref += sum(hk * _site(s, i, n) for i in range(n))
    assert np.allclose(total, ref)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_staircase_step_matches_dense_split(xyz_params, n):
    lay = xyz_layout(xyz_params, n, 1)
    u = np.eye(2**n)
    for b in range(n - 1):
        h = kron(np.eye(2**b), xyz_hamiltonian(xyz_params, bond_position(b, n)), np.eye(2 ** (n - b - 2)))
        u = expm_hermitian(h, xyz_params.tau) @ u
    assert np.allclose(lay.step_unitary(), u, atol=1e-12)


def test_disorder_deterministic_and_in_range():
    a, b = sample_disorder(7, 3), sample_disorder(7, 3)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a < 2 * np.pi))


def test_disorder_mean():
    assert abs(sample_disorder(0, 100_000).mean() - np.pi) < 0.02


@given(st.integers(0, 2**31), st.integers(1, 50))
def test_disorder_range_property(seed, n):
    a = sample_disorder(seed, n)
    assert a.shape == (n,) and np.all((a >= 0) & (a < 2 * np.pi))


def test_mbl_identity_layer():
    layer = build_mbl_layer(MBLParams(0.0, (0.0, 0.0, 0.0)))
    for g in layer:
        assert np.allclose(g, np.eye(4))


def test_mbl_pure_field_layer_is_diagonal():
    fields = (0.4, 1.3, 2.0)
    lay = mbl_layout(MBLParams(0.0, fields), 1)
    u = lay.step_unitary()
    assert np.allclose(u, np.diag(np.diag(u)))
    expected = np.exp(1j * sum(fields[i] * np.diag(_site(SZ, i, 3)).real for i in range(2)))
    assert np.allclose(np.diag(u), expected)


@pytest.mark.parametrize("include_last", [False, True])
@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_mbl_layer_matches_dense_floquet(n, include_last):
    p = MBLParams.from_seed(0.3, n, 11, include_last)
    lay = mbl_layout(p, 1)
    assert np.linalg.norm(lay.step_unitary() - mbl_floquet_dense(p)) <= 1e-10


def test_mbl_needs_two_spins():
    with pytest.raises(InvalidInputError):
        build_mbl_layer(MBLParams(0.3, (0.1,)))


def test_mbl_fields_range_checked():
    with pytest.raises(InvalidInputError):
        MBLParams(0.3, (0.1, 7.0))


def test_product_states():
    assert np.allclose(product_state(["up"]), [1, 0])
    assert np.allclose(product_state(["up", "down"]), [0, 1, 0, 0])


@given(st.lists(st.sampled_from(["up", "down"]), min_size=1, max_size=8))
def test_product_state_is_basis_vector(spec):
    v = product_state(spec)
    assert np.isclose(np.linalg.norm(v), 1.0)
    assert np.count_nonzero(v) == 1
    # spin 0 is the most significant bit
    idx = int("".join("0" if s == "up" else "1" for s in spec), 2)
    assert v[idx] == 1


@given(st.floats(0, np.pi), st.floats(-np.pi, np.pi))
def test_bloch_state_round_trip(theta, phi):
    s = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    v = bloch_state(s)
    rho = np.outer(v, v.conj())
    got = [np.trace(rho @ p).real for p in PAULIS]
    assert np.allclose(got, s, atol=1e-9)


def test_layout_validation(xyz_params):
    with pytest.raises(InvalidInputError):
        xyz_layout(xyz_params, 4, 5, target=4)
    with pytest.raises(InvalidInputError):
        CircuitLayout(3, 2, (np.eye(4), 2 * np.eye(4)))
    lay = xyz_layout(xyz_params, 4, 5, target=2)
    assert np.allclose(lay.initial[2], [1, 0]) and np.allclose(lay.initial[0], [0, 1])


@pytest.mark.parametrize("n", [3, 6])
def test_every_emitted_gate_unitary(xyz_params, n):
    for g in xyz_layout(xyz_params, n, 1).layer + mbl_layout(MBLParams.from_seed(0.3, n, 2), 1).layer:
        assert np.linalg.norm(g.conj().T @ g - np.eye(4)) <= 1e-10
