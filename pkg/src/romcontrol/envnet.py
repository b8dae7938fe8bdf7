"""Environment networks: dyadic gate splitting and density-matrix truncation.

A unitary on system (x) environment is split as ``U = sum_i A_i (x) B_i`` with
trace-orthonormal system blocks ``A_i``. The environment blocks define the
Kraus operators ``K_i = B_i / sqrt(d_S)`` of a CPTP map; propagating the
environment density matrix through it and projecting on its leading
eigenvectors at every step compresses the time-indexed environment network.

For chains, the environment of a spin is itself a spin plus *its*
environment, so the network is built one spin at a time: each level's
compressed model becomes the raw environment block of the next.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidInputError
from .models import CircuitLayout
from .tensorcore import as_complex, is_unitary, svd

log = logging.getLogger(__name__)

SCHMIDT_TOL = 1e-12
# singular values of the propagated Kraus stack below this fraction of the
# largest one are numerical zeros (eigenvalue floor ~1e-26 relative)
NULL_SV_RTOL = 1e-13
# Above this per-step threshold the eigenvalue noise of a Gram matrix is far
# below the tail mass that matters, so the cheaper eigh route is safe.
GRAM_MIN_THRESHOLD = 1e-5
GRAM_MIN_DIM = 128
DEGENERACY_RTOL = 1e-9


@dataclass(frozen=True)
class DyadicDecomposition:
    """``U = sum_i A[i] (x) B[i]`` with ``Tr(A_i A_j^dag) = delta_ij``."""

    A: np.ndarray  # (chi, d_S, d_S)
    B: np.ndarray  # (chi, d_E, d_E)

    @property
    def chi(self) -> int:
        return self.A.shape[0]

    @property
    def d_S(self) -> int:
        return self.A.shape[1]

    @property
    def d_E(self) -> int:
        return self.B.shape[1]

    def reconstruct(self) -> np.ndarray:
        return sum(np.kron(a, b) for a, b in zip(self.A, self.B))


@dataclass(frozen=True)
class EnvironmentChannel:
    kraus: np.ndarray  # (chi, d_E, d_E)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("iab,bc,idc->ad", self.kraus, rho, self.kraus.conj())

    def tp_residual(self) -> float:
        k = self.kraus
        s = np.einsum("iba,ibc->ac", k.conj(), k)
        return float(np.linalg.norm(s - np.eye(k.shape[2])))


@dataclass
class EnvironmentNetwork:
    """Compressed environment network.

    ``blocks[m-1]`` holds the truncated tensors for step m with shape
    ``(chi, r(m), r(m-1))``; ``ranks`` is r(0..N) with r(0) = 1.
    """

    blocks: list
    ranks: list
    step_errors: list
    epsilon: float
    r_max: int | None
    step_threshold: float
    saturated: bool = False
    degeneracies: int = 0
    isometries: list | None = None
    psi0: np.ndarray | None = None

    @property
    def N(self) -> int:
        return len(self.blocks)

    @property
    def chi(self) -> int:
        return self.blocks[0].shape[0] if self.blocks else 0

    @property
    def realized_error(self) -> float:
        """Upper bound sqrt(sum eps_m^2) on the relative network error."""
        return float(math.sqrt(sum(e * e for e in self.step_errors)))

    @property
    def exceeds_budget(self) -> bool:
        return self.realized_error > self.epsilon + 1e-12

    def contract(self, indices: Sequence[int]) -> np.ndarray:
        """Truncated network vector for a multi-index (i_1, ..., i_N)."""
        v = np.ones(1, dtype=np.complex128)
        for blk, i in zip(self.blocks, indices):
            v = blk[i] @ v
        return v


def _operator_schmidt(u: np.ndarray, d1: int, d2: int) -> tuple[np.ndarray, np.ndarray]:
    """``u = sum_i X_i (x) Y_i`` on C^d1 (x) C^d2 with orthonormal X, weights on Y."""
    t = u.reshape(d1, d2, d1, d2).transpose(0, 2, 1, 3).reshape(d1 * d1, d2 * d2)
    left, s, right = svd(t)
    keep = s > SCHMIDT_TOL * max(s[0], 1.0)
    x = left[:, keep].T.reshape(-1, d1, d1)
    y = (s[keep, None] * right[keep]).reshape(-1, d2, d2)
    return x, y


def decompose_gate(U, d_S: int, d_E: int, system_first: bool = True) -> DyadicDecomposition:
    """Operator-Schmidt split of ``U`` across the system/environment cut.

    With ``system_first=False`` the system is the second tensor factor of U
    (returned blocks are still ``A`` on the system and ``B`` on the environment).
    """
    u = as_complex(U)
    if u.shape != (d_S * d_E, d_S * d_E):
        raise InvalidInputError(f"gate shape {u.shape} does not match d_S*d_E = {d_S * d_E}")
    if not is_unitary(u):
        raise InvalidInputError("gate is not unitary")
    if system_first:
        a, b = _operator_schmidt(u, d_S, d_E)
    else:
        swapped = u.reshape(d_E, d_S, d_E, d_S).transpose(1, 0, 3, 2).reshape(d_S * d_E, d_S * d_E)
        a, b = _operator_schmidt(swapped, d_S, d_E)
    return DyadicDecomposition(a, b)


def env_channel(d: DyadicDecomposition) -> EnvironmentChannel:
    return EnvironmentChannel(d.B / math.sqrt(d.d_S))


def rank_select(epsilon_m: float, lambdas) -> int:
    """Smallest rank r with sqrt(sum_{j>r} lambda_j) <= epsilon_m (at least 1)."""
    lam = np.clip(np.asarray(lambdas, dtype=float), 0.0, None)
    if lam.size == 0:
        return 0
    # tails[r] = mass of eigenvalues with index >= r (0-based), tails[len] = 0
    tails = np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])
    ok = np.sqrt(tails) <= epsilon_m
    r = int(np.argmax(ok))  # first r where the kept-r tail is small enough
    return max(r, 1)


def _leading_eigs(stack: np.ndarray, step_threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of ``stack @ stack^dag`` in descending order."""
    dim, cols = stack.shape
    if step_threshold >= GRAM_MIN_THRESHOLD and dim >= GRAM_MIN_DIM and cols > dim:
        ev, u = scipy.linalg.eigh(stack @ stack.conj().T, driver="evr")
        ev, u = np.clip(ev[::-1], 0.0, None), u[:, ::-1]
        return u, np.where(ev > NULL_SV_RTOL**2 * ev[0], ev, 0.0)
    u, s, _ = svd(stack)
    s = np.where(s > NULL_SV_RTOL * (s[0] if s.size else 0.0), s, 0.0)
    return u, s * s


def truncation_sweep(
    apply_block: Callable[[int, np.ndarray], np.ndarray],
    N: int,
    psi0: np.ndarray,
    d_S: int,
    step_threshold: float,
    r_max: int | None = None,
    epsilon: float = 0.0,
    keep_isometries: bool = False,
) -> EnvironmentNetwork:
    """Density-matrix truncation sweep over a (possibly time-dependent) environment network.

    ``apply_block(m, X)`` returns ``B_i^(m) @ X`` stacked over the dyad index
    i, shape ``(chi, D(m), X.shape[1])``. The environment density matrix is
    kept in its eigenbasis: rho(m) = w(m) diag(lam) w(m)^dag, and the
    eigendecomposition of the propagated state is taken as the SVD of the
    stacked Kraus images ``K_i w(m-1) sqrt(lam)``.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128).reshape(-1)
    if not np.isclose(np.linalg.norm(psi0), 1.0, atol=1e-10):
        raise InvalidInputError("environment initial state must have unit norm")
    if N < 1:
        raise InvalidInputError("need at least one time step")
    w = psi0[:, None]
    lam = np.ones(1)
    blocks, ranks, errors, isos = [], [1], [], [psi0[:, None]] if keep_isometries else None
    saturated = False
    degeneracies = 0
    for m in range(1, N + 1):
        y = apply_block(m, w)  # (chi, D, r_prev)
        chi, dim, r_prev = y.shape
        stack = (y * np.sqrt(lam / d_S)[None, None, :]).transpose(1, 0, 2).reshape(dim, chi * r_prev)
        u, ev = _leading_eigs(stack, step_threshold)
        total = float(ev.sum())
        if total <= 0:
            raise InvalidInputError(f"environment state vanished at step {m}")
        spec = ev / total
        r = rank_select(step_threshold, spec)
        if r_max is not None and r > r_max:
            r = r_max
            saturated = True
        if r < spec.size and spec[r - 1] > 0 and spec[r - 1] - spec[r] < DEGENERACY_RTOL * spec[r - 1]:
            degeneracies += 1
            log.debug("degenerate eigenvalues at the rank cut (step %d, r=%d)", m, r)
        errors.append(float(math.sqrt(max(spec[r:].sum(), 0.0))))
        w_new = u[:, :r]
        blocks.append(np.matmul(w_new.conj().T[None], y))
        ranks.append(r)
        lam = ev[:r]
        w = w_new
        if keep_isometries:
            isos.append(w_new)
    net = EnvironmentNetwork(
        blocks=blocks,
        ranks=ranks,
        step_errors=errors,
        epsilon=epsilon,
        r_max=r_max,
        step_threshold=step_threshold,
        saturated=saturated,
        degeneracies=degeneracies,
        isometries=isos,
        psi0=psi0,
    )
    if saturated:
        log.warning("rank cap r_max=%s reached; realized error %.3e", r_max, net.realized_error)
    return net


def truncate_environment(
    channel: EnvironmentChannel,
    decomposition: DyadicDecomposition,
    psi_E,
    N: int,
    epsilon: float,
    r_max: int | None = None,
    keep_isometries: bool = False,
) -> EnvironmentNetwork:
    """Compress the environment network of a time-independent split gate.

    The per-step tail threshold is ``epsilon / sqrt(N)``.
    """
    if not 0 <= epsilon < 1:
        raise InvalidInputError("epsilon must lie in [0, 1)")
    if N < 1:
        raise InvalidInputError("need at least one time step")
    d_S = decomposition.d_S
    if not np.allclose(channel.kraus * math.sqrt(d_S), decomposition.B, atol=1e-12):
        raise InvalidInputError("channel does not match the decomposition")
    B = decomposition.B

    def apply_block(m, x):
        return np.matmul(B, x[None])

    return truncation_sweep(
        apply_block, N, psi_E, d_S, epsilon / math.sqrt(N), r_max, epsilon, keep_isometries
    )


# --- effective gates -------------------------------------------------------


def apply_effective(a: np.ndarray, blocks: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Apply ``sum A_idx (x) B^1_i1 (x) B^2_i2 ...`` to x of shape (d_S, r1, r2, ..., cols).

    ``a`` is indexed by the flattened multi-index (i1, i2, ...) in C order.
    """
    if len(blocks) == 0:
        return np.tensordot(a[0], x, axes=(1, 0))
    if len(blocks) == 1:
        (b,) = blocks
        chi, r_out, r_in = b.shape
        z = np.tensordot(a, x, axes=(2, 0))  # (i, t, a, c)
        t, c = z.shape[1], z.shape[3]
        z = z.transpose(0, 2, 1, 3).reshape(chi * r_in, t * c)
        out = b.transpose(1, 0, 2).reshape(r_out, chi * r_in) @ z
        return out.reshape(r_out, t, c).transpose(1, 0, 2)
    bl, br = blocks
    a4 = a.reshape(bl.shape[0], br.shape[0], a.shape[1], a.shape[2])
    y = np.matmul(br[:, None, None], x[None])  # (j, s, l, b', c)
    z = np.tensordot(bl, y, axes=(2, 2))  # (i, k, j, s, b', c)
    return np.tensordot(a4, z, axes=([0, 1, 3], [0, 2, 3]))  # (t, k, b', c)


def apply_effective_adjoint(a: np.ndarray, blocks: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`apply_effective`."""
    if len(blocks) == 0:
        return np.tensordot(a[0].conj().T, x, axes=(1, 0))
    ah = a.conj().transpose(0, 2, 1)
    if len(blocks) == 1:
        (b,) = blocks
        bh = b.conj().transpose(0, 2, 1)
        y = np.tensordot(ah, x, axes=(2, 0))  # (i, s, a, c)
        return np.matmul(bh[:, None], y).sum(axis=0)
    bl, br = blocks
    blh = bl.conj().transpose(0, 2, 1)
    brh = br.conj().transpose(0, 2, 1)
    a4 = ah.reshape(bl.shape[0], br.shape[0], a.shape[2], a.shape[1])
    y = np.tensordot(a4, x, axes=(3, 0))  # (i, j, s, k, b, c)
    z = np.matmul(brh[None, :, None, None], y)  # (i, j, s, k, b', c)
    # left factor on axis k, summed over i and j
    out = np.zeros((a.shape[2], blh.shape[1], brh.shape[1], x.shape[-1]), dtype=np.complex128)
    for i in range(bl.shape[0]):
        out += np.tensordot(blh[i], z[i].sum(axis=0), axes=(1, 1)).transpose(1, 0, 2, 3)
    return out


def dense_effective(a: np.ndarray, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Dense effective gate ``sum_idx A_idx (x) B^1 (x) B^2``, system factor first."""
    d = a.shape[1]
    r_in = [b.shape[2] for b in blocks]
    n_in = d * int(np.prod(r_in))
    eye = np.eye(n_in, dtype=np.complex128).reshape(d, *r_in, n_in)
    out = apply_effective(a, blocks, eye)
    return out.reshape(-1, n_in)


@dataclass
class LevelModel:
    """Spin ``s`` together with its compressed environment (one chain side)."""

    a: np.ndarray
    env: EnvironmentNetwork | None  # None: bare spin, no environment

    def rank(self, m: int) -> int:
        return 1 if self.env is None else self.env.ranks[m]

    def apply(self, m: int, x: np.ndarray) -> np.ndarray:
        """Effective gate of step m on x with shape (2 * r(m-1), cols)."""
        if self.env is None:
            return x
        blk = self.env.blocks[m - 1]
        cols = x.shape[1]
        out = apply_effective(self.a, [blk], x.reshape(self.a.shape[2], blk.shape[2], cols))
        return out.reshape(-1, cols)


@dataclass
class ChainEnvironment:
    """Compressed environments of the target spin of a staircase circuit."""

    target: int
    left: EnvironmentNetwork | None
    right: EnvironmentNetwork | None
    a_left: np.ndarray | None  # system blocks of bond (l-1, l)
    a_right: np.ndarray | None  # system blocks of bond (l, l+1)
    step_threshold: float
    level_ranks: dict = field(default_factory=dict)  # spin -> rank profile of its sub-model
    level_networks: dict | None = None  # spin -> network, only with keep_isometries

    @property
    def networks(self) -> list:
        return [e for e in (self.left, self.right) if e is not None]

    @property
    def saturated(self) -> bool:
        return any(e.saturated for e in self.networks)

    def system_blocks(self) -> np.ndarray:
        """Combined system blocks, flattened index (i_left, i_right) in C order."""
        if self.a_left is None and self.a_right is None:
            return np.eye(2, dtype=np.complex128)[None]
        if self.a_left is None:
            return self.a_right
        if self.a_right is None:
            return self.a_left
        # left bond acts first: A_ij = a_right_j @ a_left_i
        a = np.einsum("jab,ibc->ijac", self.a_right, self.a_left)
        return a.reshape(-1, 2, 2)


def _bond_split(gate: np.ndarray, system_first: bool) -> DyadicDecomposition:
    return decompose_gate(gate, 2, 2, system_first=system_first)


def _chain_side(
    layout: CircuitLayout,
    bonds: list[int],
    toward_right: bool,
    step_threshold: float,
    r_max: int | None,
    epsilon: float,
    keep_isometries: bool,
    level_ranks: dict,
    level_nets: dict,
) -> tuple[np.ndarray, EnvironmentNetwork]:
    """Absorb one chain side spin by spin, starting from the far end.

    ``bonds`` lists the bond indices from the far end inwards; the last one
    couples the target to the side.
    """
    sub: LevelModel | None = None
    N = layout.N
    a = net = None
    for b in bonds:
        # system spin of this level and its environment root
        sys_spin, env_spin = (b, b + 1) if toward_right else (b + 1, b)
        dec = _bond_split(layout.layer[b], system_first=toward_right)
        bk = dec.B
        level = sub if sub is not None else LevelModel(np.eye(2, dtype=np.complex128)[None], None)

        if toward_right:
            # B_i = U_sub (b_i (x) 1): the bond gate precedes the rest of the sweep
            def apply_block(m, x, level=level, bk=bk):
                r_prev = level.rank(m - 1)
                cols = x.shape[1]
                xt = np.tensordot(bk, x.reshape(2, r_prev * cols), axes=(2, 0))
                xt = xt.reshape(bk.shape[0], 2 * r_prev, cols)
                return np.stack([level.apply(m, xi) for xi in xt])
        else:
            # B_i = (b_i (x) 1) U_sub: the rest of the sweep precedes the bond gate
            def apply_block(m, x, level=level, bk=bk):
                z = level.apply(m, x)
                r_now = level.rank(m)
                cols = x.shape[1]
                zt = np.tensordot(bk, z.reshape(2, r_now * cols), axes=(2, 0))
                return zt.reshape(bk.shape[0], 2 * r_now, cols)

        psi0 = layout.initial[env_spin]
        net = truncation_sweep(
            apply_block, N, psi0, 2, step_threshold, r_max, epsilon, keep_isometries
        )
        level_ranks[sys_spin] = list(net.ranks)
        if keep_isometries:
            level_nets[sys_spin] = net
        a = dec.A
        sub = LevelModel(a, net)
    return a, net


def build_chain_environment(
    layout: CircuitLayout,
    l: int | None = None,
    epsilon: float = 0.01,
    r_max: int | None = None,
    keep_isometries: bool = False,
) -> ChainEnvironment:
    """Compressed left/right environments of spin ``l`` built spin by spin.

    Every absorption sweep uses the per-step threshold
    ``epsilon / sqrt(N * n_abs)`` with ``n_abs = n - 1`` sweeps in total.
    No object larger than ``2 * r`` per leg is ever formed.
    """
    l = layout.target if l is None else l
    if not 0 <= l < layout.n:
        raise InvalidInputError(f"target spin {l} outside [0, {layout.n})")
    if not 0 <= epsilon < 1:
        raise InvalidInputError("epsilon must lie in [0, 1)")
    if layout.N < 1:
        raise InvalidInputError("need at least one time step")
    n_abs = max(layout.n - 1, 1)
    thr = epsilon / math.sqrt(layout.N * n_abs)
    level_ranks: dict = {}
    level_nets: dict = {}
    a_right = right = a_left = left = None
    if l < layout.n - 1:
        bonds = list(range(layout.n - 2, l - 1, -1))
        a_right, right = _chain_side(layout, bonds, True, thr, r_max, epsilon, keep_isometries, level_ranks, level_nets)
    if l > 0:
        bonds = list(range(0, l))
        a_left, left = _chain_side(layout, bonds, False, thr, r_max, epsilon, keep_isometries, level_ranks, level_nets)
    level_ranks.pop(l, None)
    nets = level_nets if keep_isometries else None
    return ChainEnvironment(l, left, right, a_left, a_right, thr, level_ranks, nets)


def chain_lift(chain: ChainEnvironment, n: int, side: str) -> np.ndarray:
    """Isometry from the final compressed space of one side to its dense spin space.

    Columns index the rank r(N) of the side network; rows index the side's
    spins in increasing order, lowest index most significant. Requires a
    chain built with ``keep_isometries``.
    """
    if chain.level_networks is None:
        raise InvalidInputError("chain was built without isometries")
    l = chain.target
    if side == "right":
        spins = list(range(n - 1, l, -1))  # root spin of each level, far end first
    elif side == "left":
        spins = list(range(0, l))
    else:
        raise InvalidInputError(f"unknown side {side!r}")
    w = np.ones((1, 1), dtype=np.complex128)
    for s in spins:
        sys_spin = s - 1 if side == "right" else s + 1
        iso = chain.level_networks[sys_spin].isometries[-1]
        w = np.kron(np.eye(2), w) @ iso
    if side == "left" and len(spins) > 1:
        # raw layout is (spin l-1, ..., spin 0); bring it to increasing order
        k = len(spins)
        w = w.reshape((2,) * k + (-1,)).transpose(tuple(range(k - 1, -1, -1)) + (k,)).reshape(2**k, -1)
    return w


# --- dense references (small systems only) ----------------------------------


def dense_environment_network(B: np.ndarray, psi_E: np.ndarray, N: int) -> np.ndarray:
    """Exact network E[i_1..i_N] = B_iN ... B_i1 psi_E, shape (chi,)*N + (d_E,)."""
    v = np.asarray(psi_E, dtype=np.complex128)[None, :]  # (multi-index, d_E)
    chi = B.shape[0]
    for _ in range(N):
        v = np.einsum("iab,kb->kia", B, v).reshape(-1, B.shape[1])
    return v.reshape((chi,) * N + (B.shape[1],))


def dense_truncated_network(net: EnvironmentNetwork, with_final_isometry: bool = True) -> np.ndarray:
    """Truncated network as a dense tensor; optionally lifted back by w(N)."""
    v = np.ones((1, 1), dtype=np.complex128)
    for blk in net.blocks:
        v = np.einsum("iab,kb->kia", blk, v).reshape(-1, blk.shape[1])
    if with_final_isometry:
        if net.isometries is None:
            raise InvalidInputError("network was built without isometries")
        v = v @ net.isometries[-1].T
    chi = net.chi
    return v.reshape((chi,) * net.N + (v.shape[1],))
