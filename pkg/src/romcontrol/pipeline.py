"""Experiment runner: builds models, runs tasks and writes an artifact directory.

Artifacts of one run (all in one directory):

* ``manifest.json``: resolved config, seeds, timings, rank profiles,
  realized truncation errors, warnings and headline results
* ``config.yaml``: the resolved config, re-runnable as is
* ``rom_<label>.npz``: reduced-order models
* ``trajectory_<label>.csv``: single-spin trajectories
* ``controls_<label>.npz`` and ``loss_<label>.csv``: optimized controls and loss histories
* ``infoflow_<label>.csv/.json``: raw mutual-information maps
* ``self_info_<label>.csv``: I_{l->l}(k) per protocol
"""

from __future__ import annotations

import csv
import json
import logging
import os
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, dump_config
from .control import (
    TetrahedronStates,
    echo_problem,
    erase_recover_problem,
    flip_baseline,
    optimize,
    single_gate_echo_problem,
    transfer_problem,
)
from .errors import InvalidInputError
from .exactsim import (
    MAX_SPINS,
    InfoFlowMap,
    causal_cone_dim,
    controls_hash,
    info_flow,
    light_cone_dim,
    site_trajectory,
)
from .io import load_controls, save_controls, save_rom, write_loss_history
from .models import SX, SY, SZ
from .rom import ReducedOrderModel, Trajectory, mutual_information, rom_from_layout
from .sequence import ControlSequence
from .tensorcore import trace_distance

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
LOCK = ".lock"


class Run:
    """Mutable state of one pipeline invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.manifest = {
            "schema": "manifest/1",
            "package_version": __version__,
            "name": cfg.name,
            "config": cfg.to_dict(),
            "seeds": list(cfg.seeds),
            "threads": cfg.threads,
            "timings": {},
            "roms": {},
            "results": {},
            "warnings": [],
            "artifacts": [],
        }

    def path(self, name: str) -> Path:
        if name not in self.manifest["artifacts"]:
            self.manifest["artifacts"].append(name)
        return self.out / name

    @contextmanager
    def timed(self, key: str):
        t0 = time.perf_counter()
        yield
        self.manifest["timings"][key] = time.perf_counter() - t0

    def warn(self, msg: str) -> None:
        log.warning(msg)
        self.manifest["warnings"].append(msg)

    def write_manifest(self) -> Path:
        p = self.out / MANIFEST
        with open(p, "w") as fh:
            json.dump(_jsonable(self.manifest), fh, indent=2)
        return p


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


@contextmanager
def _exclusive(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InvalidInputError(f"artifact directory {out} is in use (remove {lock} if stale)") from None
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


# --- building blocks ---------------------------------------------------------


def build_model(run: Run, layout, label: str) -> ReducedOrderModel:
    tr = run.cfg.truncation
    with run.timed(f"build_rom_{label}"):
        rom = rom_from_layout(layout, tr.epsilon, tr.r_max)
    save_rom(run.path(f"rom_{label}.npz"), rom)
    meta = rom.meta
    run.manifest["roms"][label] = {
        "target": rom.target,
        "dims": rom.dims,
        "env_ranks": rom.env_ranks,
        "env_spins": _env_spins(layout.n, rom.target),
        "level_ranks": meta.get("level_ranks", {}),
        "realized_errors": meta.get("realized_errors", []),
        "step_threshold": meta.get("step_threshold"),
        "saturated": bool(meta.get("saturated", False)),
    }
    if meta.get("saturated"):
        errs = ", ".join(f"{e:.3e}" for e in meta.get("realized_errors", []))
        run.warn(f"rom {label}: rank cap r_max={tr.r_max} reached; realized error(s) {errs} vs epsilon {tr.epsilon}")
    return rom


def _env_spins(n: int, l: int) -> list[int]:
    """Number of environment spins per side (left first)."""
    return [s for s in (l, n - 1 - l) if s > 0]


def _save_trajectory(run: Run, traj: Trajectory, label: str) -> None:
    traj.to_csv(run.path(f"trajectory_{label}.csv"))


def _save_infoflow(run: Run, fmap: InfoFlowMap, label: str) -> None:
    fmap.export(run.path(f"infoflow_{label}.csv"), run.path(f"infoflow_{label}.json"), rescale=False)


def _exact_ok(n: int, extra: int = 0) -> bool:
    return n + extra <= MAX_SPINS


def _save_optimization(run: Run, result, label: str) -> None:
    save_controls(run.path(f"controls_{label}.npz"), result.controls)
    write_loss_history(run.path(f"loss_{label}.csv"), result.history)


def self_information(rom: ReducedOrderModel, controls) -> np.ndarray:
    """I_{l->l}(k) for k = 0..N from one Choi-mode pass through the model."""
    xs = rom.run(rom.initial("choi"), controls)
    out = []
    for x in xs:
        m = rom.reduced(x)
        out.append(mutual_information(m / np.trace(m).real))
    return np.array(out)


# --- tasks ------------------------------------------------------------------


def run_simulate(run: Run) -> None:
    cfg = run.cfg
    layout = cfg.layout()
    rom = build_model(run, layout, "main")
    k0, k1 = cfg.window
    cases = {"none": None}
    if k1 > k0:
        controls = ControlSequence.random(k0, k1, cfg.seeds[0])
        save_controls(run.path("controls_random.npz"), controls)
        cases["random"] = controls
    res = run.manifest["results"]
    res["final_dim"] = rom.dims[-1]
    for label, c in cases.items():
        with run.timed(f"propagate_{label}"):
            traj = rom.propagate(c)
        _save_trajectory(run, traj, f"rom_{label}")
        if cfg.task.validate and _exact_ok(layout.n):
            with run.timed(f"exact_{label}"):
                ex = site_trajectory(layout, c)
            _save_trajectory(run, ex, f"exact_{label}")
            res[f"max_bloch_deviation_{label}"] = float(np.abs(traj.bloch - ex.bloch).max())
    if cfg.task.validate and not _exact_ok(layout.n):
        run.warn(f"n = {layout.n} exceeds the exact-simulation cap; validation skipped")
    if cfg.task.light_cone:
        if _exact_ok(layout.n, 1):
            with run.timed("light_cone"):
                bound = light_cone_dim(layout, cfg.task.light_cone_delta)
            res["light_cone_bound"] = bound.tolist()
            res["light_cone_delta"] = cfg.task.light_cone_delta
        else:
            res["light_cone_bound"] = causal_cone_dim(layout.n, layout.target, layout.N).tolist()
            res["light_cone_delta"] = None
            run.warn("chain too large for exact tomography; light cone taken from the circuit structure")
    if cfg.task.infoflow:
        _infoflow_maps(run, layout, cases)


def _infoflow_maps(run: Run, layout, cases: dict, suffix: str = "") -> None:
    if not _exact_ok(layout.n, 1):
        run.warn("info-flow maps skipped: chain too large for exact tomography")
        return
    for label, c in cases.items():
        with run.timed(f"infoflow_{label}{suffix}"):
            fmap = info_flow(layout, layout.target, c)
        _save_infoflow(run, fmap, f"{label}{suffix}")


def run_echo(run: Run) -> None:
    cfg = run.cfg
    k0, k1 = cfg.window
    N = cfg.model.N
    per_seed = {}
    for seed in cfg.seeds:
        layout = cfg.layout(seed)
        label = f"seed{seed}"
        rom = build_model(run, layout, label)
        protocols: dict = {"none": None}
        if cfg.task.one_flip_baseline:
            protocols["one_flip"] = flip_baseline(cfg.echo_k, N, two_flips=False)
        if cfg.task.two_flip_baseline:
            protocols["two_flip"] = flip_baseline(cfg.echo_k, N, two_flips=True)
        opt = cfg.optimizer
        with run.timed(f"optimize_single_{label}"):
            single = optimize(single_gate_echo_problem(rom, cfg.echo_k), opt)
        _save_optimization(run, single, f"single_{label}")
        protocols["single"] = single.controls
        with run.timed(f"optimize_multistep_{label}"):
            multi = optimize(echo_problem(rom, k0, k1), opt)
        _save_optimization(run, multi, f"multistep_{label}")
        protocols["multistep"] = multi.controls
        curves = {name: self_information(rom, c) for name, c in protocols.items()}
        with open(run.path(f"self_info_{label}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k"] + list(curves))
            for k in range(N + 1):
                w.writerow([k] + [repr(float(curves[p][k])) for p in curves])
        per_seed[seed] = {
            "final_I": {p: float(v[-1]) for p, v in curves.items()},
            "iterations": {"single": single.iterations, "multistep": multi.iterations},
            "stopped": {"single": single.stopped, "multistep": multi.stopped},
            "controls_hash": {p: controls_hash(c) for p, c in protocols.items()},
        }
        if cfg.task.infoflow:
            _infoflow_maps(run, layout, protocols, f"_{label}")
    names = list(next(iter(per_seed.values()))["final_I"])
    mean = {p: float(np.mean([per_seed[s]["final_I"][p] for s in cfg.seeds])) for p in names}
    run.manifest["results"] = {
        "window": [k0, k1],
        "echo_k": cfg.echo_k,
        "per_seed": per_seed,
        "mean_final_I": mean,
        "ordering_holds": bool(mean["multistep"] > mean["single"] > mean["none"]),
    }


def run_erase_recover(run: Run) -> None:
    cfg = run.cfg
    layout = cfg.layout()
    rom = build_model(run, layout, "main")
    k0, k1 = cfg.window
    with run.timed("optimize"):
        result = optimize(erase_recover_problem(rom, k0, k1), cfg.optimizer)
    _save_optimization(run, result, "erase_recover")
    N = cfg.model.N
    rows = []
    for i, phi in enumerate(TetrahedronStates().kets):
        traj = rom.propagate(result.controls, phi)
        row = {
            "input": i,
            "td_mid_from_mixed": trace_distance(traj.rho[N // 2], np.eye(2) / 2),
            "td_final_from_initial": trace_distance(traj.rho[N], traj.rho[0]),
        }
        if cfg.task.validate and _exact_ok(layout.n):
            init = list(layout.initial)
            init[layout.target] = phi
            ex = site_trajectory(layout.with_initial(init), result.controls)
            row["exact_td_mid_from_mixed"] = trace_distance(ex.rho[N // 2], np.eye(2) / 2)
            row["exact_td_final_from_initial"] = trace_distance(ex.rho[N], ex.rho[0])
        _save_trajectory(run, traj, f"rom_input{i}")
        rows.append(row)
    run.manifest["results"] = {
        "loss": result.loss,
        "initial_loss": result.initial_loss,
        "iterations": result.iterations,
        "stopped": result.stopped,
        "tetrahedron": rows,
    }


def transfer_layouts(cfg: ExperimentConfig) -> list:
    base = cfg.layout(target=cfg.alice)
    out = []
    for phi in TetrahedronStates().kets:
        init = list(base.initial)
        init[cfg.task.bob] = phi
        out.append(base.with_initial(init))
    return out


def _bloch(rho: np.ndarray) -> list[float]:
    return [float(np.trace(rho @ s).real) for s in (SX, SY, SZ)]


def run_transfer(run: Run) -> None:
    cfg = run.cfg
    layouts = transfer_layouts(cfg)
    roms = [build_model(run, lay, f"input{i}") for i, lay in enumerate(layouts)]
    tet = TetrahedronStates()
    k0, k1 = cfg.window
    with run.timed("optimize"):
        result = optimize(transfer_problem(roms, tet.kets, k0, k1, cfg.threads), cfg.optimizer)
    _save_optimization(run, result, "transfer")
    points = []
    for i, (rom, phi) in enumerate(zip(roms, tet.kets)):
        for label, c in (("none", None), ("optimized", result.controls)):
            rho = rom.propagate(c).rho[-1]
            points.append({
                "input": i,
                "controls": label,
                "input_bloch": list(tet.vectors[i]),
                "output_bloch": _bloch(rho),
                "fidelity": float(np.vdot(phi, rho @ phi).real),
            })
    mean = {lab: float(np.mean([p["fidelity"] for p in points if p["controls"] == lab])) for lab in ("none", "optimized")}
    run.manifest["results"] = {
        "bob": cfg.task.bob,
        "alice": cfg.alice,
        "loss": result.loss,
        "initial_loss": result.initial_loss,
        "iterations": result.iterations,
        "stopped": result.stopped,
        "points": points,
        "mean_fidelity": mean,
    }


TASK_RUNNERS = {
    "simulate": run_simulate,
    "echo": run_echo,
    "erase_recover": run_erase_recover,
    "transfer": run_transfer,
}


def run_stage(cfg: ExperimentConfig, stage: str, out=None, controls_path=None) -> Path:
    """Run one pipeline stage and write the manifest.

    ``stage`` is ``run`` (the configured task), ``build-rom``, ``simulate``,
    ``optimize`` or ``infoflow``.
    """
    out = cfg.output_dir(out)
    with _exclusive(out):
        run = Run(cfg, out)
        dump_config(cfg, run.path("config.yaml"))
        t0 = time.perf_counter()
        run.manifest["stage"] = stage
        if stage == "build-rom":
            if cfg.task.kind == "transfer":
                for i, lay in enumerate(transfer_layouts(cfg)):
                    build_model(run, lay, f"input{i}")
            elif cfg.task.kind == "echo":
                for seed in cfg.seeds:
                    build_model(run, cfg.layout(seed), f"seed{seed}")
            else:
                build_model(run, cfg.layout(), "main")
        elif stage == "simulate":
            run_simulate(run)
        elif stage == "optimize":
            if cfg.task.kind == "simulate":
                raise InvalidInputError("task.kind: 'simulate' has nothing to optimize")
            TASK_RUNNERS[cfg.task.kind](run)
        elif stage == "infoflow":
            layout = cfg.layout()
            cases = {"none": None}
            if controls_path is not None:
                c = load_controls(controls_path)
                c.validate(cfg.model.N)
                cases[Path(controls_path).stem] = c
            _infoflow_maps(run, layout, cases)
        elif stage == "run":
            TASK_RUNNERS[cfg.task.kind](run)
        else:
            raise InvalidInputError(f"unknown stage {stage!r}")
        run.manifest["timings"]["total"] = time.perf_counter() - t0
        run.write_manifest()
    return out


# --- plot data ---------------------------------------------------------------


def _read_csv(path: Path) -> tuple[list, np.ndarray]:
    with open(path) as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def export_plot_data(artifact_dir, dest=None) -> list[Path]:
    """Turn the artifacts of a run into plot-ready CSV/JSON bundles.

    Everything is assembled in a scratch directory first, so a failure
    leaves no partial output behind.
    """
    src = Path(artifact_dir)
    if not (src / MANIFEST).is_file():
        raise InvalidInputError(f"{src}: no {MANIFEST}; not an artifact directory")
    with open(src / MANIFEST) as fh:
        manifest = json.load(fh)
    dest = src / "plots" if dest is None else Path(dest)
    tables: dict[str, list] = {}
    sidecars: dict[str, dict] = {}

    traj_rows = []
    for p in sorted(src.glob("trajectory_*.csv")):
        _, data = _read_csv(p)
        label = p.stem[len("trajectory_"):]
        traj_rows += [[label, int(r[0])] + [float(x) for x in r[1:]] for r in data]
    if traj_rows:
        tables["trajectories.csv"] = [["label", "k", "sx", "sy", "sz", "purity"]] + traj_rows

    rank_rows = []
    bound = manifest.get("results", {}).get("light_cone_bound")
    for label, info in manifest.get("roms", {}).items():
        ranks = info["env_ranks"]
        env_spins = info.get("env_spins", [])
        d_env = int(np.prod([2**s for s in env_spins])) if env_spins else 1
        for k, d in enumerate(info["dims"]):
            r_sides = [r[k] for r in ranks] + [1] * (2 - len(ranks))
            rank_rows.append([label, k, d, r_sides[0], r_sides[1], min(2**k, d_env), d_env, bound[k] if bound else ""])
    if rank_rows:
        tables["ranks.csv"] = [["label", "k", "d_eff", "r_side0", "r_side1", "bound_2k", "d_E", "light_cone_bound"]] + rank_rows

    for p in sorted(src.glob("infoflow_*.csv")):
        label = p.stem[len("infoflow_"):]
        meta_path = p.with_suffix(".json")
        if not meta_path.is_file():
            raise InvalidInputError(f"{p}: missing metadata file {meta_path.name}")
        with open(meta_path) as fh:
            meta = json.load(fh)
        header, data = _read_csv(p)
        values = data[:, 1:]
        if meta.get("rescaled"):
            values = np.exp(values) - 1e-2
        fmap = InfoFlowMap(values, meta["l"], meta["n"], meta["N"], meta.get("controls_hash", ""))
        resc = fmap.rescaled()
        tables[f"heatmap_{label}.csv"] = [header] + [[k] + [repr(float(x)) for x in row] for k, row in enumerate(resc)]
        sidecars[f"heatmap_{label}.json"] = {
            "schema": "heatmap/1",
            "l": fmap.l,
            "n": fmap.n,
            "N": fmap.N,
            "controls_hash": fmap.controls_hash,
            "rescaled": True,
            "rescale": "log(I + 1e-2)",
            "units": "bits before rescaling",
        }

    for p in sorted(src.glob("self_info_*.csv")):
        header, data = _read_csv(p)
        tables[p.name] = [header] + [[int(r[0])] + [repr(float(x)) for x in r[1:]] for r in data]

    points = manifest.get("results", {}).get("points")
    if points:
        rows = [["kind", "input", "controls", "sx", "sy", "sz", "fidelity"]]
        for i in sorted({p["input"] for p in points}):
            first = next(p for p in points if p["input"] == i)
            rows.append(["input", i, "", *first["input_bloch"], 1.0])
        for p in points:
            rows.append(["output", p["input"], p["controls"], *p["output_bloch"], p["fidelity"]])
        tables["bloch_points.csv"] = rows

    if not tables:
        raise InvalidInputError(f"{src}: no plottable artifacts found")
    index = {"schema": "plotdata/1", "source": str(src), "name": manifest.get("name"), "files": sorted(list(tables) + list(sidecars))}
    scratch = dest.with_name(dest.name + ".tmp")
    if scratch.exists():
        shutil.rmtree(scratch)
    scratch.mkdir(parents=True)
    try:
        for name, rows in tables.items():
            with open(scratch / name, "w", newline="") as fh:
                csv.writer(fh).writerows(rows)
        for name, meta in sidecars.items():
            with open(scratch / name, "w") as fh:
                json.dump(meta, fh, indent=2)
        with open(scratch / "index.json", "w") as fh:
            json.dump(index, fh, indent=2)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    if dest.exists():
        shutil.rmtree(dest)
    scratch.rename(dest)
    return sorted(dest.iterdir())
