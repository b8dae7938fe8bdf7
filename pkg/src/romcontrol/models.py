"""Discrete-time spin-chain circuits.

A time step is one left-to-right staircase sweep of two-site gates over the
bonds (0, 1), (1, 2), ..., (n-2, n-1). Spin 0 is the most significant bit of
every state-vector index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .tensorcore import expm_hermitian, is_unitary, kron

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
I2 = np.eye(2, dtype=np.complex128)
PAULIS = (SX, SY, SZ)

UP = np.array([1.0, 0.0], dtype=np.complex128)
DOWN = np.array([0.0, 1.0], dtype=np.complex128)

# (weight on first spin, weight on second spin) of the single-spin field terms
_FIELD_WEIGHTS = {
    "left": (1.0, 0.5),
    "mid": (0.5, 0.5),
    "right": (0.5, 1.0),
    "single": (1.0, 1.0),  # n = 2: the only bond touches both chain ends
}


@dataclass(frozen=True)
class XYZParams:
    J: tuple[float, float, float] = (0.9, 1.0, 1.1)
    h: tuple[float, float, float] = (0.2, 0.2, 0.2)
    tau: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "J", tuple(float(x) for x in self.J))
        object.__setattr__(self, "h", tuple(float(x) for x in self.h))
        if len(self.J) != 3 or len(self.h) != 3:
            raise InvalidInputError("J and h must be 3-vectors")
        if not np.all(np.isfinite(self.J + self.h)) or not np.isfinite(self.tau):
            raise InvalidInputError("XYZ parameters must be finite")
        if self.tau < 0:
            raise InvalidInputError("tau must be non-negative")


@dataclass(frozen=True)
class MBLParams:
    J: float
    fields: tuple[float, ...]
    seed: int | None = None
    include_last_field: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(float(x) for x in self.fields))
        f = np.asarray(self.fields)
        if np.any(f < 0) or np.any(f >= 2 * np.pi):
            raise InvalidInputError("fields must lie in [0, 2*pi)")

    @classmethod
    def from_seed(cls, J: float, n: int, seed: int, include_last_field: bool = False) -> "MBLParams":
        return cls(J, tuple(sample_disorder(seed, n)), seed, include_last_field)


def xyz_hamiltonian(p: XYZParams, position: str) -> np.ndarray:
    try:
        w0, w1 = _FIELD_WEIGHTS[position]
    except KeyError:
        raise InvalidInputError(f"unknown gate position {position!r}") from None
    h = np.zeros((4, 4), dtype=np.complex128)
    for jk, hk, s in zip(p.J, p.h, PAULIS):
        h += jk * np.kron(s, s) + w0 * hk * np.kron(s, I2) + w1 * hk * np.kron(I2, s)
    return h


def build_xyz_gate(p: XYZParams, position: str) -> np.ndarray:
    """Two-site XYZ gate ``exp(-i tau H_position)``.

    Chain-end spins carry the full field, interior spins half of it from each
    of their two bonds.
    """
    return expm_hermitian(xyz_hamiltonian(p, position), p.tau)


def bond_position(bond: int, n: int) -> str:
    if n == 2:
        return "single"
    if bond == 0:
        return "left"
    if bond == n - 2:
        return "right"
    return "mid"


def xyz_layer(p: XYZParams, n: int) -> list[np.ndarray]:
    if n < 2:
        raise InvalidInputError("an XYZ chain needs at least two spins")
    return [build_xyz_gate(p, bond_position(b, n)) for b in range(n - 1)]


def sample_disorder(seed: int, n: int) -> np.ndarray:
    """``n`` angles drawn from Uniform[0, 2 pi), deterministic in ``seed``."""
    if n < 1:
        raise InvalidInputError("n must be positive")
    rng = np.random.default_rng(seed)
    return np.mod(rng.uniform(0.0, 2 * np.pi, size=n), 2 * np.pi)


def build_mbl_layer(p: MBLParams) -> list[np.ndarray]:
    """Floquet layer ``exp[i sum_i (h_i Z_i + J Z_i Z_i+1)] exp[i J sum_i X_i]`` as bond gates.

    Bond (i, i+1) carries ``exp(i(h_i Z_i + J Z_i Z_i+1))`` preceded by the x
    rotation of spin i+1 (bond 0 also rotates spin 0). All diagonal factors
    commute, so the left-to-right sweep reproduces the full operator. The field
    sum runs over spins 0..n-2 unless ``include_last_field`` is set.
    """
    n = len(p.fields)
    if n < 2:
        raise InvalidInputError("the Floquet chain needs at least two spins")
    rx = np.cos(p.J) * I2 + 1j * np.sin(p.J) * SX
    zz = np.diag(np.kron(SZ, SZ)).real
    z0 = np.diag(np.kron(SZ, I2)).real
    z1 = np.diag(np.kron(I2, SZ)).real
    gates = []
    for b in range(n - 1):
        phase = p.fields[b] * z0 + p.J * zz
        if p.include_last_field and b == n - 2:
            phase = phase + p.fields[n - 1] * z1
        diag = np.diag(np.exp(1j * phase))
        rot = np.kron(rx, rx) if b == 0 else np.kron(I2, rx)
        gates.append(diag @ rot)
    return gates


def mbl_floquet_dense(p: MBLParams) -> np.ndarray:
    """Dense Floquet operator built from full-chain exponentials (small n only)."""
    n = len(p.fields)

    def site(op, i):
        return kron(*[op if j == i else I2 for j in range(n)])

    def pair(op, i):
        return kron(*[op if j in (i, i + 1) else I2 for j in range(n)])

    last = n if p.include_last_field else n - 1
    diag = sum(p.fields[i] * np.diag(site(SZ, i)).real for i in range(last))
    diag = diag + sum(p.J * np.diag(pair(SZ, i)).real for i in range(n - 1))
    x_sum = sum(site(SX, i) for i in range(n))
    return np.diag(np.exp(1j * diag)) @ expm_hermitian(-p.J * x_sum, 1.0)


def spin_state(s) -> np.ndarray:
    if isinstance(s, str):
        if s == "up":
            return UP.copy()
        if s == "down":
            return DOWN.copy()
        raise InvalidInputError(f"unknown spin state {s!r}")
    v = np.asarray(s, dtype=np.complex128).reshape(-1)
    if v.shape != (2,) or not np.isclose(np.linalg.norm(v), 1.0, atol=1e-10):
        raise InvalidInputError("a spin state must be a unit 2-vector")
    return v


def product_state(spec: Sequence) -> np.ndarray:
    """Tensor product of single-spin states; entries are 'up', 'down' or unit 2-vectors."""
    if len(spec) < 1:
        raise InvalidInputError("need at least one spin")
    return kron(*[spin_state(s)[:, None] for s in spec])[:, 0]


def bloch_state(s: Sequence[float]) -> np.ndarray:
    """Pure state whose Bloch vector is the unit vector ``s``."""
    x, y, z = s
    theta = np.arctan2(np.hypot(x, y), z)  # arccos loses small angles near the poles
    phi = np.arctan2(y, x)
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=np.complex128)


@dataclass(frozen=True)
class CircuitLayout:
    """A time-independent staircase circuit on ``n`` spins run for ``N`` steps.

    ``layer[b]`` is the 4x4 gate on bond (b, b+1); ``initial`` holds the
    per-spin product initial state.
    """

    n: int
    N: int
    layer: tuple
    target: int = 0
    initial: tuple = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("n must be positive")
        if self.N < 0:
            raise InvalidInputError("N must be non-negative")
        if len(self.layer) != max(self.n - 1, 0):
            raise InvalidInputError(f"expected {self.n - 1} bond gates, got {len(self.layer)}")
        for g in self.layer:
            if np.shape(g) != (4, 4) or not is_unitary(g):
                raise InvalidInputError("bond gates must be 4x4 unitaries")
        if not 0 <= self.target < self.n:
            raise InvalidInputError(f"target spin {self.target} outside [0, {self.n})")
        init = self.initial or tuple(["up" if i == self.target else "down" for i in range(self.n)])
        if len(init) != self.n:
            raise InvalidInputError("initial state list must have n entries")
        object.__setattr__(self, "layer", tuple(np.asarray(g, dtype=np.complex128) for g in self.layer))
        object.__setattr__(self, "initial", tuple(spin_state(s) for s in init))

    def with_target(self, l: int) -> "CircuitLayout":
        return CircuitLayout(self.n, self.N, self.layer, l, self.initial)

    def with_initial(self, initial) -> "CircuitLayout":
        return CircuitLayout(self.n, self.N, self.layer, self.target, tuple(initial))

    def with_steps(self, N: int) -> "CircuitLayout":
        return CircuitLayout(self.n, N, self.layer, self.target, self.initial)

    def step_unitary(self) -> np.ndarray:
        """Dense single-step unitary (small n only)."""
        u = np.eye(2**self.n, dtype=np.complex128)
        for b, g in enumerate(self.layer):
            full = kron(np.eye(2**b), g, np.eye(2 ** (self.n - b - 2)))
            u = full @ u
        return u

    def initial_state(self) -> np.ndarray:
        return product_state(self.initial)


def xyz_layout(p: XYZParams, n: int, N: int, target: int = 0, initial=()) -> CircuitLayout:
    return CircuitLayout(n, N, tuple(xyz_layer(p, n)), target, tuple(initial))


def mbl_layout(p: MBLParams, N: int, target: int = 0, initial=()) -> CircuitLayout:
    return CircuitLayout(len(p.fields), N, tuple(build_mbl_layer(p)), target, tuple(initial))
