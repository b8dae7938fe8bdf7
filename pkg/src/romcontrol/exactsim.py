"""Exact state-vector simulation of the full chain.

States are stored as arrays of shape ``(lead, 2**n)``: ``lead`` is 1 for a
plain state and 2 when an ancilla maximally entangled with one spin is
carried along for process tomography.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, ResourceError
from .models import CircuitLayout
from .rom import ChoiMatrix, Trajectory, mutual_information
from .sequence import ControlSequence
from .tensorcore import trace_distance

MAX_SPINS = 24
RESCALE_OFFSET = 1e-2


def _check_size(n: int, cap: int | None):
    cap = MAX_SPINS if cap is None else cap
    if n > cap:
        raise ResourceError(f"{n} spins exceed the state-vector cap of {cap}")


def apply_bond(psi: np.ndarray, gate: np.ndarray, b: int, n: int) -> np.ndarray:
    lead = psi.shape[0]
    t = psi.reshape(lead, 2**b, 4, 2 ** (n - b - 2))
    return np.einsum("ij,ajb->aib", gate, t.reshape(lead * 2**b, 4, -1)).reshape(lead, -1)


def apply_site(psi: np.ndarray, op: np.ndarray, s: int, n: int) -> np.ndarray:
    lead = psi.shape[0]
    t = psi.reshape(lead * 2**s, 2, 2 ** (n - s - 1))
    return np.einsum("ij,ajb->aib", op, t).reshape(lead, -1)


def step(psi: np.ndarray, layout: CircuitLayout, control: np.ndarray | None = None) -> np.ndarray:
    """One time step: optional control on the target, then the bond sweep."""
    n = layout.n
    if control is not None:
        psi = apply_site(psi, control, layout.target, n)
    for b, g in enumerate(layout.layer):
        psi = apply_bond(psi, g, b, n)
    return psi


def reduced_site(psi: np.ndarray, s: int, n: int) -> np.ndarray:
    """Reduced density matrix of (lead, spin s), lead factor first."""
    lead = psi.shape[0]
    t = psi.reshape(lead, 2**s, 2, 2 ** (n - s - 1))
    rho = np.einsum("axsy,bxty->asbt", t, t.conj())
    return rho.reshape(2 * lead, 2 * lead)


@dataclass
class StateTrajectory:
    """Final state of an evolution plus, on request, every intermediate state."""

    n: int
    final: np.ndarray  # (lead, 2**n)
    states: list | None = None  # (lead, 2**n) arrays for k = 0..N
    controls: ControlSequence | None = None

    def site_trajectory(self, s: int) -> Trajectory:
        if self.states is None:
            raise InvalidInputError("evolution was run without keeping intermediate states")
        return Trajectory(np.stack([reduced_site(p, s, self.n) for p in self.states]))


def _validate_controls(layout: CircuitLayout, controls):
    if controls is not None:
        controls.validate(layout.N, 2)


def evolve(
    layout: CircuitLayout,
    psi0: np.ndarray | None = None,
    controls: ControlSequence | None = None,
    cap: int | None = None,
    keep_states: bool = False,
) -> StateTrajectory:
    """Run the full chain for N steps.

    Only the current state is held unless ``keep_states`` is set, so memory
    stays at two state buffers.
    """
    _check_size(layout.n, cap)
    _validate_controls(layout, controls)
    psi = layout.initial_state() if psi0 is None else np.asarray(psi0, dtype=np.complex128)
    psi = psi.reshape(1, -1) if psi.ndim == 1 else psi
    if psi.shape[1] != 2**layout.n:
        raise InvalidInputError("state size does not match the chain")
    if not np.isclose(np.linalg.norm(psi), 1.0, atol=1e-10):
        raise InvalidInputError("initial state must have unit norm")
    states = [psi] if keep_states else None
    for k in range(layout.N):
        u = None if controls is None else controls.gate_at(k)
        psi = step(psi, layout, u)
        if keep_states:
            states.append(psi)
    return StateTrajectory(layout.n, psi, states, controls)


def site_trajectory(layout: CircuitLayout, controls: ControlSequence | None = None, site: int | None = None) -> Trajectory:
    """Single-spin trajectory without keeping the full state history."""
    _check_size(layout.n, None)
    _validate_controls(layout, controls)
    s = layout.target if site is None else site
    psi = layout.initial_state().reshape(1, -1)
    rhos = [reduced_site(psi, s, layout.n)]
    for k in range(layout.N):
        psi = step(psi, layout, None if controls is None else controls.gate_at(k))
        rhos.append(reduced_site(psi, s, layout.n))
    return Trajectory(np.stack(rhos))


def entangled_initial(layout: CircuitLayout, l: int) -> np.ndarray:
    """Ancilla maximally entangled with spin l; all other spins in their initial states."""
    rows = []
    for a in range(2):
        init = list(layout.initial)
        init[l] = np.eye(2)[a]
        v = init[0]
        for s in init[1:]:
            v = np.kron(v, s)
        rows.append(v / math.sqrt(2))
    return np.array(rows, dtype=np.complex128)


def _tomography_run(layout: CircuitLayout, l: int, controls, k_max: int, sites):
    """Trace-one Choi matrices Omega_{l->m}(k) for m in sites, k = 0..k_max."""
    psi = entangled_initial(layout, l)
    n = layout.n
    out = [[reduced_site(psi, m, n) for m in sites]]
    for k in range(k_max):
        psi = step(psi, layout, None if controls is None else controls.gate_at(k))
        out.append([reduced_site(psi, m, n) for m in sites])
    return out


def process_channel(
    layout: CircuitLayout,
    l: int,
    m: int,
    k: int,
    controls: ControlSequence | None = None,
) -> ChoiMatrix:
    """Choi matrix of the map from spin l at time 0 to spin m at time k."""
    _check_size(layout.n + 1, None)
    _validate_controls(layout, controls)
    if not (0 <= l < layout.n and 0 <= m < layout.n):
        raise InvalidInputError("spin index out of range")
    if not 0 <= k <= layout.N:
        raise InvalidInputError(f"time {k} outside [0, {layout.N}]")
    omega = _tomography_run(layout, l, controls, k, [m])[-1][0]
    return ChoiMatrix.from_trace_one(omega)


@dataclass
class InfoFlowMap:
    """Mutual information I_{l->m}(k) in bits; ``values[k, m]``."""

    values: np.ndarray
    l: int
    n: int
    N: int
    controls_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def self_information(self) -> np.ndarray:
        return self.values[:, self.l]

    def rescaled(self) -> np.ndarray:
        return np.log(self.values + RESCALE_OFFSET)

    def export(self, csv_path, json_path, rescale: bool = True) -> None:
        data = self.rescaled() if rescale else self.values
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k"] + [f"m{m}" for m in range(self.n)])
            for k, row in enumerate(data):
                w.writerow([k] + [repr(float(x)) for x in row])
        meta = {
            "schema": "infoflow/1",
            "l": self.l,
            "n": self.n,
            "N": self.N,
            "controls_hash": self.controls_hash,
            "rescaled": rescale,
            "rescale": "log(I + 1e-2)" if rescale else None,
            "units": "bits",
            **self.meta,
        }
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2)


def controls_hash(controls: ControlSequence | None) -> str:
    if controls is None:
        return "none"
    h = hashlib.sha256()
    h.update(np.array([controls.k_start, controls.k_stop], dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(controls.gates).tobytes())
    return h.hexdigest()[:16]


def info_flow(layout: CircuitLayout, l: int | None = None, controls: ControlSequence | None = None) -> InfoFlowMap:
    l = layout.target if l is None else l
    _check_size(layout.n + 1, None)
    _validate_controls(layout, controls)
    omegas = _tomography_run(layout, l, controls, layout.N, range(layout.n))
    vals = np.array([[mutual_information(w) for w in row] for row in omegas])
    return InfoFlowMap(np.clip(vals, 0.0, 2.0), l, layout.n, layout.N, controls_hash(controls))


def light_cone_dim(layout: CircuitLayout, delta: float = 1e-6, l: int | None = None) -> np.ndarray:
    """Light-cone bound 2**(number of spins reached from spin l) for k = 0..N.

    Spin m is reached at time k once the trace distance between its Choi
    matrix Omega_{l->m}(k) and the product of its marginals exceeds delta,
    i.e. once its state depends on the initial state of spin l. The target
    itself always counts.
    """
    l = layout.target if l is None else l
    _check_size(layout.n + 1, None)
    omegas = _tomography_run(layout, l, None, layout.N, range(layout.n))
    reached = np.zeros(layout.n, dtype=bool)
    reached[l] = True
    bound = []
    for row in omegas:
        for m, w in enumerate(row):
            if reached[m]:
                continue
            r1 = w.reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
            r2 = w.reshape(2, 2, 2, 2).trace(axis1=0, axis2=2)
            if trace_distance(w, np.kron(r1, r2)) > delta:
                reached[m] = True
        bound.append(2 ** int(reached.sum()))
    return np.array(bound, dtype=np.int64)


def causal_cone_dim(n: int, l: int, N: int) -> np.ndarray:
    """Structural light-cone bound of the staircase circuit, no simulation.

    One left-to-right sweep carries spin l's influence to the right chain
    end but only one bond to the left.
    """
    bound = []
    for k in range(N + 1):
        if k == 0:
            count = 1
        else:
            count = n - max(l - k, 0)
        bound.append(2**count)
    return np.array(bound, dtype=np.int64)


@dataclass
class DisorderAverage:
    mean: InfoFlowMap
    mean_self_information: np.ndarray
    per_seed: dict


def disorder_average(
    run_one: Callable[[int], InfoFlowMap],
    seeds: Sequence[int],
    threads: int = 1,
) -> DisorderAverage:
    """Average info-flow maps over disorder realizations (fixed summation order)."""
    seeds = list(seeds)
    if not seeds:
        raise InvalidInputError("need at least one seed")
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            maps = list(ex.map(run_one, seeds))
    else:
        maps = [run_one(s) for s in seeds]
    acc = np.zeros_like(maps[0].values)
    for m in maps:
        acc = acc + m.values
    mean_vals = acc / len(maps)
    first = maps[0]
    mean = InfoFlowMap(mean_vals, first.l, first.n, first.N, "mean", {"seeds": seeds})
    per_seed: dict = {}
    for s, m in zip(seeds, maps):
        per_seed.setdefault(s, m)
    return DisorderAverage(mean, mean_vals[:, first.l], per_seed)
