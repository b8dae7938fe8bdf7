"""Control losses, adjoint gradients and a Riemannian ADAM optimizer.

Gradients follow the conjugate (Wirtinger) convention: for a real loss f of
a complex matrix u the gradient is ``G = 2 df/d(conj u)``, so that
``df = Re Tr(G^dag du)`` and ``u - lr * G`` is a descent direction.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, OptimizationError
from .models import SX, bloch_state
from .rom import ReducedOrderModel, depolarizing_choi, identity_choi
from .sequence import ControlSequence, random_unitaries
from .tensorcore import partial_trace

log = logging.getLogger(__name__)

LOSSES = ("identity_recover", "erase_recover", "transfer", "echo")
EIG_FLOOR = 1e-14
STALL_WINDOW = 200

# f(M) -> (value, gradient with respect to conj(M), times 2)
MatrixLoss = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


# --- matrix-level losses ----------------------------------------------------


def frobenius_to(target: np.ndarray) -> MatrixLoss:
    target = np.asarray(target, dtype=np.complex128)

    def f(m):
        diff = m - target
        return float(np.vdot(diff, diff).real), 2.0 * diff

    return f


def _entropy_and_grad(rho: np.ndarray) -> tuple[float, np.ndarray]:
    """Entropy in bits and its gradient ``-(log2 rho + 1/ln 2)``."""
    lam, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    lam = np.clip(lam, EIG_FLOOR, None)
    s = float(-np.sum(lam * np.log2(lam)))
    g = -(np.log2(lam) + 1.0 / math.log(2.0))
    return s, (vecs * g) @ vecs.conj().T


def neg_mutual_information(m: np.ndarray) -> tuple[float, np.ndarray]:
    """``-I`` (bits) of an unnormalized Choi matrix, trace normalization included."""
    d = int(round(math.sqrt(m.shape[0])))
    t = np.trace(m).real
    omega = m / t
    r_in = partial_trace(omega, (d, d), (0,))
    r_out = partial_trace(omega, (d, d), (1,))
    s_in, g_in = _entropy_and_grad(r_in)
    s_out, g_out = _entropy_and_grad(r_out)
    s_j, g_j = _entropy_and_grad(omega)
    eye = np.eye(d)
    g_omega = np.kron(g_in, eye) + np.kron(eye, g_out) - g_j
    g_m = g_omega / t - np.trace(g_omega @ m).real / t**2 * np.eye(d * d)
    return -(s_in + s_out - s_j), -g_m


# --- control problems -------------------------------------------------------


@dataclass
class Run:
    """One forward pass of a model: initial joint array and loss terms at given times."""

    rom: ReducedOrderModel
    x0: np.ndarray
    terms: list  # (time, MatrixLoss)

    @property
    def horizon(self) -> int:
        return max(t for t, _ in self.terms)


class ControlProblem:
    """Loss of a control window evaluated through one or more reduced models.

    The joint state at the start of the window does not depend on the
    controls and is cached.
    """

    def __init__(self, runs: Sequence[Run], k_start: int, k_stop: int, name: str = "", threads: int = 1):
        self.runs = list(runs)
        if not self.runs:
            raise InvalidInputError("a control problem needs at least one model run")
        self.k_start, self.k_stop = int(k_start), int(k_stop)
        self.name = name
        self.threads = max(int(threads), 1)
        self.d = self.runs[0].rom.d_S
        for r in self.runs:
            if r.rom.d_S != self.d:
                raise InvalidInputError("models disagree on the system dimension")
            if not 0 <= self.k_start <= self.k_stop <= r.rom.N:
                raise InvalidInputError(f"window [{k_start}, {k_stop}) outside [0, {r.rom.N})")
            if any(not 0 <= t <= r.rom.N for t, _ in r.terms):
                raise InvalidInputError("loss time outside the model horizon")
        self._prefix = [self._run_prefix(r) for r in self.runs]

    @property
    def window(self) -> tuple[int, int]:
        return self.k_start, self.k_stop

    @property
    def size(self) -> int:
        return self.k_stop - self.k_start

    def _run_prefix(self, run: Run) -> list:
        stop = min(self.k_start, run.horizon)
        return run.rom.run(run.x0, None, stop)

    def sequence(self, gates) -> ControlSequence:
        return ControlSequence(np.asarray(gates, dtype=np.complex128).reshape(-1, self.d, self.d), self.k_start, self.k_stop)

    def _map(self, fn, items):
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(fn, items))
        return [fn(i) for i in items]

    def _one(self, idx: int, gates: np.ndarray, need_grad: bool):
        run, prefix = self.runs[idx], self._prefix[idx]
        rom, d = run.rom, self.d
        horizon = run.horizon
        xs = list(prefix)
        x = xs[-1]
        for k in range(len(xs) - 1, horizon):
            if self.k_start <= k < self.k_stop:
                x = rom.apply_control(gates[k - self.k_start], x)
            x = rom.apply_step(k + 1, x)
            xs.append(x)
        value = 0.0
        seeds = {}
        for t, f in run.terms:
            v, g = f(rom.reduced(xs[t]))
            value += v
            if need_grad and t > self.k_start:
                seeds[t] = seeds.get(t, 0) + _reduced_adjoint(g, xs[t], d)
        if not need_grad:
            return value, None
        grads = np.zeros_like(gates)
        lam = np.zeros_like(xs[horizon])
        for k in range(horizon - 1, self.k_start - 1, -1):
            if k + 1 in seeds:
                lam = lam + seeds[k + 1]
            lam = rom.apply_step_adjoint(k + 1, lam)
            if k < self.k_stop:
                i = k - self.k_start
                cols = lam.shape[1]
                lr = lam.reshape(d, -1)
                grads[i] = lr @ xs[k].reshape(d, -1).conj().T
                lam = (gates[i].conj().T @ lr).reshape(-1, cols)
        return value, grads

    def value_and_grad(self, gates) -> tuple[float, np.ndarray]:
        gates = np.asarray(gates, dtype=np.complex128).reshape(self.size, self.d, self.d)
        out = self._map(lambda i: self._one(i, gates, True), list(range(len(self.runs))))
        total, grad = 0.0, np.zeros_like(gates)
        for v, g in out:
            total += v
            grad += g
        return total, grad

    def value(self, gates) -> float:
        gates = np.asarray(gates, dtype=np.complex128).reshape(self.size, self.d, self.d)
        out = self._map(lambda i: self._one(i, gates, False), list(range(len(self.runs))))
        return float(sum(v for v, _ in out))


def _reduced_adjoint(g_m: np.ndarray, x: np.ndarray, d: int) -> np.ndarray:
    """Pull a Hermitian gradient on ``reduced(x)`` back to ``x``."""
    cols = x.shape[1]
    # W[(a, s), e] = x[(s, e), a]; reduced(x) = W W^dag
    w = x.reshape(d, -1, cols).transpose(2, 0, 1).reshape(cols * d, -1)
    gw = 2.0 * g_m @ w
    return gw.reshape(cols, d, -1).transpose(1, 2, 0).reshape(x.shape)


class GateMatching:
    """Toy problem ``sum_i ||u_i - V_i||_F^2`` used to sanity-check the optimizer."""

    def __init__(self, targets):
        self.targets = np.asarray(targets, dtype=np.complex128)
        if self.targets.ndim == 2:
            self.targets = self.targets[None]
        self.k_start, self.k_stop = 0, self.targets.shape[0]
        self.d = self.targets.shape[1]
        self.name = "gate_matching"

    @property
    def window(self):
        return self.k_start, self.k_stop

    @property
    def size(self) -> int:
        return self.k_stop - self.k_start

    def sequence(self, gates) -> ControlSequence:
        return ControlSequence(np.asarray(gates).reshape(-1, self.d, self.d), self.k_start, self.k_stop)

    def value_and_grad(self, gates):
        diff = np.asarray(gates, dtype=np.complex128).reshape(self.targets.shape) - self.targets
        return float(np.vdot(diff, diff).real), 2.0 * diff

    def value(self, gates) -> float:
        return self.value_and_grad(gates)[0]


def _window_of(controls: ControlSequence | None, N: int) -> ControlSequence:
    if controls is None:
        return ControlSequence.identity(0, 0)
    controls.validate(N)
    return controls


def identity_recover_problem(rom: ReducedOrderModel, k_start: int, k_stop: int) -> ControlProblem:
    d = rom.d_S
    run = Run(rom, rom.initial("choi"), [(rom.N, frobenius_to(identity_choi(d).data))])
    return ControlProblem([run], k_start, k_stop, "identity_recover")


def erase_recover_problem(rom: ReducedOrderModel, k_start: int, k_stop: int) -> ControlProblem:
    if rom.N % 2:
        raise InvalidInputError(f"erase-and-recover needs an even number of steps, got N = {rom.N}")
    d = rom.d_S
    terms = [
        (rom.N // 2, frobenius_to(depolarizing_choi(d).data)),
        (rom.N, frobenius_to(identity_choi(d).data)),
    ]
    return ControlProblem([Run(rom, rom.initial("choi"), terms)], k_start, k_stop, "erase_recover")


def transfer_problem(roms: Sequence[ReducedOrderModel], targets, k_start: int, k_stop: int, threads: int = 1) -> ControlProblem:
    """``targets`` are the pure states the controlled spin should end in, one per model."""
    roms = list(roms)
    if len(roms) != len(targets):
        raise InvalidInputError("need one target state per model")
    first = roms[0]
    for r in roms[1:]:
        if r.N != first.N or r.d_S != first.d_S or r.target != first.target:
            raise InvalidInputError("transfer models must share the circuit and the controlled spin")
        if np.abs(r.a - first.a).max() > 1e-12:
            raise InvalidInputError("transfer models differ in their system blocks")
    runs = []
    for rom, phi in zip(roms, targets):
        phi = np.asarray(phi, dtype=np.complex128)
        runs.append(Run(rom, rom.initial("state"), [(rom.N, frobenius_to(np.outer(phi, phi.conj())))]))
    return ControlProblem(runs, k_start, k_stop, "transfer", threads)


def echo_problem(rom: ReducedOrderModel, k_start: int, k_stop: int) -> ControlProblem:
    run = Run(rom, rom.initial("choi"), [(rom.N, neg_mutual_information)])
    return ControlProblem([run], k_start, k_stop, "echo")


def single_gate_echo_problem(rom: ReducedOrderModel, k: int | None = None) -> ControlProblem:
    """Generalized spin echo: one optimized gate at time ``k`` (default mid-dynamics)."""
    k = rom.N // 2 if k is None else k
    return echo_problem(rom, k, k + 1)


def _evaluate(problem: ControlProblem, controls: ControlSequence) -> float:
    if controls.window != problem.window:
        raise InvalidInputError("control window does not match the problem")
    return problem.value(controls.gates)


def loss_identity_recover(rom: ReducedOrderModel, controls: ControlSequence | None = None) -> float:
    c = _window_of(controls, rom.N)
    return _evaluate(identity_recover_problem(rom, c.k_start, c.k_stop), c)


def loss_erase_recover(rom: ReducedOrderModel, controls: ControlSequence | None = None) -> float:
    c = _window_of(controls, rom.N)
    return _evaluate(erase_recover_problem(rom, c.k_start, c.k_stop), c)


def loss_transfer(roms: Sequence[ReducedOrderModel], controls: ControlSequence | None = None, targets=None) -> float:
    roms = list(roms)
    c = _window_of(controls, roms[0].N)
    targets = TetrahedronStates().kets if targets is None else targets
    return _evaluate(transfer_problem(roms, targets, c.k_start, c.k_stop), c)


def loss_echo(rom: ReducedOrderModel, controls: ControlSequence | None = None) -> float:
    c = _window_of(controls, rom.N)
    return _evaluate(echo_problem(rom, c.k_start, c.k_stop), c)


def gradient(problem, controls: ControlSequence) -> np.ndarray:
    """Euclidean (conjugate-coordinate) gradients, one per gate of the window."""
    if controls.window != problem.window:
        raise InvalidInputError("control window does not match the problem")
    return problem.value_and_grad(controls.gates)[1]


# --- tetrahedron input states -----------------------------------------------


@dataclass(frozen=True)
class TetrahedronStates:
    vectors: tuple = (
        (0.0, 0.0, 1.0),
        (2 * math.sqrt(2) / 3, 0.0, -1 / 3),
        (-math.sqrt(2) / 3, math.sqrt(2 / 3), -1 / 3),
        (-math.sqrt(2) / 3, -math.sqrt(2 / 3), -1 / 3),
    )

    @property
    def bloch(self) -> np.ndarray:
        return np.array(self.vectors)

    @property
    def kets(self) -> list[np.ndarray]:
        return [bloch_state(s) for s in self.vectors]

    @property
    def projectors(self) -> list[np.ndarray]:
        return [np.outer(k, k.conj()) for k in self.kets]


# --- manifold optimization --------------------------------------------------


def herm(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + np.swapaxes(x, -1, -2).conj())


def riemannian_grad(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Project ``g`` onto the tangent space of the unitary group at ``u``."""
    u = np.asarray(u, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    if u.shape != g.shape:
        raise InvalidInputError("gate and gradient shapes differ")
    return g - u @ herm(np.swapaxes(u, -1, -2).conj() @ g)


def retract(u: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Polar retraction of ``u + step`` onto the unitary group."""
    y = np.asarray(u, dtype=np.complex128) + np.asarray(step, dtype=np.complex128)
    if not np.all(np.isfinite(y)):
        raise OptimizationError("non-finite retraction step")
    w, _, vh = np.linalg.svd(y)
    return w @ vh


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    max_iters: int = 10000
    tol: float = 1e-7
    seed: int = 0
    init: str = "identity"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise InvalidInputError("beta1 and beta2 must lie in (0, 1)")
        if self.eps_adam < 0:
            raise InvalidInputError("eps_adam must be non-negative")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be at least 1")
        if self.tol < 0:
            raise InvalidInputError("tol must be non-negative")
        if self.init not in ("identity", "random"):
            raise InvalidInputError(f"unknown init {self.init!r}")


@dataclass
class LossHistory:
    iters: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)

    def append(self, it: int, loss: float, gnorm: float) -> None:
        self.iters.append(it)
        self.losses.append(loss)
        self.grad_norms.append(gnorm)

    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.losses)) if self.losses else np.zeros(0)

    def __len__(self) -> int:
        return len(self.losses)


@dataclass
class OptimizationResult:
    controls: ControlSequence
    loss: float
    history: LossHistory
    initial_loss: float
    iterations: int
    stopped: str
    max_unitarity_defect: float


def initial_gates(problem, config: OptimizerConfig) -> np.ndarray:
    if config.init == "random":
        return random_unitaries(problem.size, problem.d, np.random.default_rng(config.seed))
    return np.broadcast_to(np.eye(problem.d, dtype=np.complex128), (problem.size, problem.d, problem.d)).copy()


def optimize(problem, config: OptimizerConfig | None = None, init=None) -> OptimizationResult:
    """Riemannian ADAM on the product of unitary groups.

    First moments live in ambient coordinates and are re-projected onto the
    current tangent space every step; second moments are one scalar per gate.
    """
    config = config or OptimizerConfig()
    u = initial_gates(problem, config) if init is None else np.array(init, dtype=np.complex128)
    history = LossHistory()
    if problem.size == 0:
        v0 = problem.value(u)
        history.append(0, v0, 0.0)
        return OptimizationResult(problem.sequence(u), v0, history, v0, 0, "empty window", 0.0)
    eye = np.eye(problem.d)
    m = np.zeros_like(u)
    v = np.zeros(u.shape[0])
    best_u, best = u.copy(), math.inf
    initial_loss = None
    drift = 0.0
    stopped = "max_iters"
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate
    it = 0
    for it in range(1, config.max_iters + 1):
        loss, g = problem.value_and_grad(u)
        if not math.isfinite(loss) or not np.all(np.isfinite(g)):
            raise OptimizationError(f"non-finite loss or gradient at iteration {it} (loss = {loss})")
        if initial_loss is None:
            initial_loss = loss
        r = riemannian_grad(u, g)
        gnorm = float(np.linalg.norm(r))
        history.append(it, loss, gnorm)
        if loss < best:
            best, best_u = loss, u.copy()
        if len(history) > STALL_WINDOW:
            ref = min(history.losses[: -STALL_WINDOW])
            if ref - best <= config.tol * max(abs(ref), 1e-300):
                stopped = "stalled"
                break
        m = riemannian_grad(u, b1 * m + (1 - b1) * r)
        v = b2 * v + (1 - b2) * np.einsum("kij,kij->k", r.conj(), r).real
        m_hat = m / (1 - b1**it)
        v_hat = v / (1 - b2**it)
        u = retract(u, -lr * m_hat / (np.sqrt(v_hat) + config.eps_adam)[:, None, None])
        drift = max(drift, float(np.abs(np.swapaxes(u, -1, -2).conj() @ u - eye).max()))
    controls = problem.sequence(best_u)
    log.info("%s: loss %.6g -> %.6g after %d iterations (%s)", problem.name, initial_loss, best, it, stopped)
    return OptimizationResult(controls, best, history, initial_loss, it, stopped, max(drift, controls.max_unitarity_defect()))


# --- echo baselines ---------------------------------------------------------


def flip_baseline(k_mid: int, N: int, two_flips: bool = False) -> ControlSequence:
    """Spin-echo baseline: a sigma_x flip at ``k_mid`` (and again at the last step)."""
    one = ControlSequence.single(k_mid, SX)
    if not two_flips or k_mid == N - 1:
        return one
    return ControlSequence.merge(one, ControlSequence.single(N - 1, SX))
