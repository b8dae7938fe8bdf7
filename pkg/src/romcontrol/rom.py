"""Reduced-order models of a single controlled spin.

The joint state of the target spin and its compressed environment(s) is
stored as an array ``X`` of shape ``(d_S * R(k), cols)`` where R(k) is the
product of the environment ranks and the system index is the slowest one.
``cols`` is 1 for a pure state and d_S when an ancilla maximally entangled
with the input is carried along (channel / Choi matrix mode).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .envnet import (
    ChainEnvironment,
    EnvironmentNetwork,
    apply_effective,
    apply_effective_adjoint,
    build_chain_environment,
    dense_effective,
)
from .errors import InvalidInputError
from .models import SX, SY, SZ, CircuitLayout
from .sequence import ControlSequence
from .tensorcore import density_spectrum, partial_trace

ENTROPY_FLOOR = 1e-14
DENSE_CACHE_BYTES = 256 * 2**20


@dataclass
class ChoiMatrix:
    """Choi matrix ``sum_ij |i><j| (x) Phi(|i><j|)`` (input factor first).

    ``data`` is stored unnormalized (trace d_S for a trace-preserving map).
    """

    data: np.ndarray

    @property
    def d(self) -> int:
        return int(round(math.sqrt(self.data.shape[0])))

    def unnormalized(self) -> np.ndarray:
        return self.data

    def trace_one(self) -> np.ndarray:
        return self.data / np.trace(self.data).real

    def input_marginal(self) -> np.ndarray:
        """Marginal on the input factor of the trace-one view."""
        return partial_trace(self.trace_one(), (self.d, self.d), (0,))

    def output_marginal(self) -> np.ndarray:
        return partial_trace(self.trace_one(), (self.d, self.d), (1,))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = self.d
        j = self.data.reshape(d, d, d, d)
        return np.einsum("ij,iajb->ab", np.asarray(rho), j)

    @classmethod
    def from_trace_one(cls, omega: np.ndarray) -> "ChoiMatrix":
        d = int(round(math.sqrt(omega.shape[0])))
        return cls(np.asarray(omega, dtype=np.complex128) * d)


def identity_choi(d: int = 2) -> ChoiMatrix:
    v = np.eye(d, dtype=np.complex128).reshape(-1)
    return ChoiMatrix(np.outer(v, v))


def depolarizing_choi(d: int = 2) -> ChoiMatrix:
    return ChoiMatrix(np.eye(d * d, dtype=np.complex128) / d)


def dephasing_choi(d: int = 2) -> ChoiMatrix:
    j = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        j[i * d + i, i * d + i] = 1.0
    return ChoiMatrix(j)


def unitary_choi(u: np.ndarray) -> ChoiMatrix:
    # column (i, s) of the Choi vector: (u |i>)_s
    v = u.T.reshape(-1)
    return ChoiMatrix(np.outer(v, v.conj()))


def _entropy_bits(rho: np.ndarray) -> float:
    lam, _ = density_spectrum(rho)
    lam = lam[lam >= ENTROPY_FLOOR]
    return float(-np.sum(lam * np.log2(lam)))


def mutual_information(omega) -> float:
    """Mutual information (bits) between the two factors of a trace-one Choi matrix."""
    w = omega.trace_one() if isinstance(omega, ChoiMatrix) else np.asarray(omega, dtype=np.complex128)
    tr = np.trace(w).real
    if abs(tr - 1.0) > 1e-8:
        raise InvalidInputError(f"Choi matrix must have unit trace (got {tr:.3e})")
    d = int(round(math.sqrt(w.shape[0])))
    r1 = partial_trace(w, (d, d), (0,))
    r2 = partial_trace(w, (d, d), (1,))
    return _entropy_bits(r1) + _entropy_bits(r2) - _entropy_bits(w)


@dataclass
class Trajectory:
    rho: np.ndarray  # (N+1, d, d)

    @property
    def bloch(self) -> np.ndarray:
        """Columns <sx>, <sy>, <sz> for every time step."""
        return np.stack(
            [np.einsum("kij,ji->k", self.rho, s).real for s in (SX, SY, SZ)], axis=1
        )

    @property
    def purity(self) -> np.ndarray:
        return np.einsum("kij,kji->k", self.rho, self.rho).real

    def to_csv(self, path) -> None:
        b, p = self.bloch, self.purity
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "sx", "sy", "sz", "purity"])
            for k in range(len(p)):
                w.writerow([k] + [repr(float(x)) for x in (b[k, 0], b[k, 1], b[k, 2], p[k])])


@dataclass
class ReducedOrderModel:
    """Effective gates ``U_m = sum_i A_i (x) B~_i^(m)`` for m = 1..N.

    ``env_blocks[m-1]`` lists one truncated block array per environment side
    (left first); an empty list means a bare spin.
    """

    a: np.ndarray  # (chi, d_S, d_S), flattened multi-index over sides
    env_blocks: list
    env_ranks: list  # one rank profile per side
    target: int
    psi_S0: np.ndarray
    meta: dict = field(default_factory=dict)
    _dense: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.psi_S0 = np.asarray(self.psi_S0, dtype=np.complex128).reshape(-1)
        chi = int(np.prod([b.shape[0] for b in self.env_blocks[0]])) if self.env_blocks and self.env_blocks[0] else 1
        if self.a.shape[0] != chi:
            raise InvalidInputError(f"system blocks ({self.a.shape[0]}) do not match environment dyads ({chi})")
        for m, blks in enumerate(self.env_blocks, start=1):
            for side, blk in enumerate(blks):
                if blk.shape[1:] != (self.env_ranks[side][m], self.env_ranks[side][m - 1]):
                    raise InvalidInputError(f"block shape mismatch at step {m}")

    @property
    def d_S(self) -> int:
        return self.a.shape[1]

    @property
    def N(self) -> int:
        return len(self.env_blocks)

    def env_dim(self, k: int) -> int:
        return int(np.prod([r[k] for r in self.env_ranks])) if self.env_ranks else 1

    @property
    def dims(self) -> list[int]:
        """Effective dimensions d_S * R(k) for k = 0..N."""
        return [self.d_S * self.env_dim(k) for k in range(self.N + 1)]

    def _side_shape(self, k: int) -> tuple:
        return tuple(r[k] for r in self.env_ranks)

    def dense_gate(self, m: int) -> np.ndarray:
        return dense_effective(self.a, self.env_blocks[m - 1])

    def _dense_gates(self):
        if self._dense is None:
            dims = self.dims
            size = sum(16 * dims[m] * dims[m - 1] for m in range(1, self.N + 1))
            self._dense = [self.dense_gate(m) for m in range(1, self.N + 1)] if size <= DENSE_CACHE_BYTES else []
        return self._dense

    def apply_step(self, m: int, x: np.ndarray) -> np.ndarray:
        dense = self._dense_gates()
        if dense:
            return dense[m - 1] @ x
        cols = x.shape[1]
        xt = x.reshape((self.d_S,) + self._side_shape(m - 1) + (cols,))
        return apply_effective(self.a, self.env_blocks[m - 1], xt).reshape(-1, cols)

    def apply_step_adjoint(self, m: int, y: np.ndarray) -> np.ndarray:
        dense = self._dense_gates()
        if dense:
            return dense[m - 1].conj().T @ y
        cols = y.shape[1]
        yt = y.reshape((self.d_S,) + self._side_shape(m) + (cols,))
        return apply_effective_adjoint(self.a, self.env_blocks[m - 1], yt).reshape(-1, cols)

    def initial(self, mode: str = "state", psi_S=None) -> np.ndarray:
        """Initial joint array: the system state, or an unnormalized Choi vector."""
        if mode == "state":
            v = self.psi_S0 if psi_S is None else np.asarray(psi_S, dtype=np.complex128)
            return v[:, None].copy()
        if mode == "choi":
            return np.eye(self.d_S, dtype=np.complex128)
        raise InvalidInputError(f"unknown mode {mode!r}")

    def apply_control(self, u: np.ndarray, x: np.ndarray) -> np.ndarray:
        cols = x.shape[1]
        xt = x.reshape(self.d_S, -1)
        return (u @ xt).reshape(-1, cols)

    def run(self, x0: np.ndarray, controls: ControlSequence | None, k_stop: int | None = None) -> list:
        """Joint arrays X_0..X_k_stop (no validation)."""
        k_stop = self.N if k_stop is None else k_stop
        xs = [x0]
        x = x0
        for k in range(k_stop):
            u = None if controls is None else controls.gate_at(k)
            if u is not None:
                x = self.apply_control(u, x)
            x = self.apply_step(k + 1, x)
            xs.append(x)
        return xs

    def reduced(self, x: np.ndarray) -> np.ndarray:
        """Sum over the environment: rho_S for a state, unnormalized Choi for the ancilla mode."""
        d = self.d_S
        xt = x.reshape(d, -1, x.shape[1])
        out = np.einsum("sea,tef->asft", xt, xt.conj())
        c = x.shape[1]
        return out.reshape(c * d, c * d)

    def _check_controls(self, controls):
        if controls is not None:
            controls.validate(self.N, self.d_S)

    def propagate(self, controls: ControlSequence | None = None, psi_S=None) -> Trajectory:
        self._check_controls(controls)
        xs = self.run(self.initial("state", psi_S), controls)
        return Trajectory(np.stack([self.reduced(x) for x in xs]))

    def channel(self, controls: ControlSequence | None, k: int) -> ChoiMatrix:
        self._check_controls(controls)
        if not 0 <= k <= self.N:
            raise InvalidInputError(f"time {k} outside [0, {self.N}]")
        x = self.run(self.initial("choi"), controls, k)[-1]
        return ChoiMatrix(self.reduced(x))

    def isometry_defects(self) -> list[float]:
        out = []
        for m in range(1, self.N + 1):
            g = self.dense_gate(m)
            out.append(float(np.linalg.norm(g.conj().T @ g - np.eye(g.shape[1]))))
        return out

    def max_gate_norm(self) -> float:
        return max((float(np.linalg.norm(self.dense_gate(m), 2)) for m in range(1, self.N + 1)), default=1.0)


def build_rom(
    a: np.ndarray,
    envs: list[EnvironmentNetwork],
    target: int,
    psi_S0,
    meta: dict | None = None,
) -> ReducedOrderModel:
    """Assemble the model from system blocks and one or two environment networks.

    With two networks (left, right) the system block index runs over
    (i_left, i_right) in C order.
    """
    if not envs:
        raise InvalidInputError("need at least one environment network")
    N = envs[0].N
    if any(e.N != N for e in envs):
        raise InvalidInputError("environment networks cover different numbers of steps")
    blocks = [[e.blocks[m] for e in envs] for m in range(N)]
    return ReducedOrderModel(np.asarray(a), blocks, [list(e.ranks) for e in envs], target, psi_S0, meta or {})


def rom_from_chain(chain: ChainEnvironment, layout: CircuitLayout) -> ReducedOrderModel:
    psi = layout.initial[chain.target]
    meta = {
        "n": layout.n,
        "N": layout.N,
        "step_threshold": chain.step_threshold,
        "saturated": chain.saturated,
        "realized_errors": [e.realized_error for e in chain.networks],
        "level_ranks": {str(k): list(v) for k, v in sorted(chain.level_ranks.items())},
    }
    if not chain.networks:
        # lone spin: trivial one-dimensional environment
        blocks = [[] for _ in range(layout.N)]
        return ReducedOrderModel(chain.system_blocks(), blocks, [], chain.target, psi, meta)
    return build_rom(chain.system_blocks(), chain.networks, chain.target, psi, meta)


def rom_from_layout(
    layout: CircuitLayout,
    epsilon: float = 0.01,
    r_max: int | None = None,
    l: int | None = None,
) -> ReducedOrderModel:
    """Build the compressed environments of the target spin and the model on top."""
    l = layout.target if l is None else l
    if layout.n == 1:
        blocks = [[] for _ in range(layout.N)]
        return ReducedOrderModel(np.eye(2, dtype=np.complex128)[None], blocks, [], 0, layout.initial[0], {"n": 1, "N": layout.N})
    chain = build_chain_environment(layout.with_target(l), l, epsilon, r_max)
    rom = rom_from_chain(chain, layout.with_target(l))
    rom.meta["epsilon"] = epsilon
    rom.meta["r_max"] = r_max
    return rom
