"""Binary containers for networks, models and control sequences.

Every container is an uncompressed ``.npz`` archive. The ``header`` entry is
a JSON document holding the format name, the format version and all scalar
metadata; array entries carry the raw complex data:

* ``envnet/1``: ``ranks`` (int64), ``step_errors`` (float64), ``block_<m>``
  for m = 0..N-1 with shape (chi, r(m+1), r(m)), optional ``iso_<m>`` for
  m = 0..N and ``psi0``.
* ``rom/1``: system blocks ``a`` (chi, d_S, d_S), ``psi_S0``,
  ``ranks_<s>`` per environment side and ``block_<m>_<s>`` per step and side.
* ``controls/1``: ``gates`` (dN, d, d) plus the window in the header.

Arrays are written and read back without conversion, so a round trip is
bit-identical.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .envnet import EnvironmentNetwork
from .errors import InvalidInputError
from .rom import ReducedOrderModel
from .sequence import ControlSequence

ENVNET_FORMAT = ("envnet", 1)
ROM_FORMAT = ("rom", 1)
CONTROLS_FORMAT = ("controls", 1)


def _write(path, fmt, header: dict, arrays: dict) -> Path:
    path = Path(path)
    head = {"format": fmt[0], "version": fmt[1], **header}
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(head)), **arrays)
    os.replace(tmp, path)
    return path


def _read(path, fmt) -> tuple[dict, dict]:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"no such file: {path}")
    with np.load(path, allow_pickle=False) as z:
        if "header" not in z.files:
            raise InvalidInputError(f"{path} is not a {fmt[0]} container")
        head = json.loads(str(z["header"]))
        arrays = {k: z[k] for k in z.files if k != "header"}
    if head.get("format") != fmt[0]:
        raise InvalidInputError(f"{path}: expected format {fmt[0]!r}, found {head.get('format')!r}")
    if head.get("version") != fmt[1]:
        raise InvalidInputError(f"{path}: unsupported {fmt[0]} version {head.get('version')}")
    return head, arrays


def save_network(path, net: EnvironmentNetwork) -> Path:
    arrays = {
        "ranks": np.asarray(net.ranks, dtype=np.int64),
        "step_errors": np.asarray(net.step_errors, dtype=np.float64),
    }
    for m, blk in enumerate(net.blocks):
        arrays[f"block_{m}"] = blk
    if net.isometries is not None:
        for m, w in enumerate(net.isometries):
            arrays[f"iso_{m}"] = w
    if net.psi0 is not None:
        arrays["psi0"] = net.psi0
    header = {
        "N": net.N,
        "epsilon": net.epsilon,
        "r_max": net.r_max,
        "step_threshold": net.step_threshold,
        "saturated": net.saturated,
        "degeneracies": net.degeneracies,
        "has_isometries": net.isometries is not None,
    }
    return _write(path, ENVNET_FORMAT, header, arrays)


def load_network(path) -> EnvironmentNetwork:
    head, arr = _read(path, ENVNET_FORMAT)
    N = head["N"]
    isos = [arr[f"iso_{m}"] for m in range(N + 1)] if head["has_isometries"] else None
    return EnvironmentNetwork(
        blocks=[arr[f"block_{m}"] for m in range(N)],
        ranks=[int(r) for r in arr["ranks"]],
        step_errors=[float(e) for e in arr["step_errors"]],
        epsilon=head["epsilon"],
        r_max=head["r_max"],
        step_threshold=head["step_threshold"],
        saturated=head["saturated"],
        degeneracies=head["degeneracies"],
        isometries=isos,
        psi0=arr.get("psi0"),
    )


def save_rom(path, rom: ReducedOrderModel) -> Path:
    arrays = {"a": rom.a, "psi_S0": rom.psi_S0}
    for s, ranks in enumerate(rom.env_ranks):
        arrays[f"ranks_{s}"] = np.asarray(ranks, dtype=np.int64)
    for m, blks in enumerate(rom.env_blocks):
        for s, blk in enumerate(blks):
            arrays[f"block_{m}_{s}"] = blk
    header = {"N": rom.N, "sides": len(rom.env_ranks), "target": rom.target, "meta": rom.meta}
    return _write(path, ROM_FORMAT, header, arrays)


def load_rom(path) -> ReducedOrderModel:
    head, arr = _read(path, ROM_FORMAT)
    sides = head["sides"]
    blocks = [[arr[f"block_{m}_{s}"] for s in range(sides)] for m in range(head["N"])]
    ranks = [[int(r) for r in arr[f"ranks_{s}"]] for s in range(sides)]
    return ReducedOrderModel(arr["a"], blocks, ranks, head["target"], arr["psi_S0"], head["meta"])


def save_controls(path, controls: ControlSequence) -> Path:
    header = {"k_start": controls.k_start, "k_stop": controls.k_stop}
    return _write(path, CONTROLS_FORMAT, header, {"gates": controls.gates})


def load_controls(path) -> ControlSequence:
    head, arr = _read(path, CONTROLS_FORMAT)
    return ControlSequence(arr["gates"], head["k_start"], head["k_stop"])


def write_loss_history(path, history) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "loss", "grad_norm"])
        for it, loss, g in zip(history.iters, history.losses, history.grad_norms):
            w.writerow([it, repr(float(loss)), repr(float(g))])
    return path
