import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from romcontrol.cli import main
from romcontrol.config import ConfigError, dump_config, from_dict, load_config
from romcontrol.pipeline import export_plot_data

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


def _small(kind="simulate", **task):
    return {
        "name": f"tiny_{kind}",
        "model": {"kind": "xyz", "n": 4, "N": 6},
        "truncation": {"epsilon": "1e-3"},
        "task": {"kind": kind, **task},
        "optimizer": {"max_iters": 20},
    }


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert cfg.name == path.stem


def test_string_floats_are_coerced():
    assert from_dict(_small()).truncation.epsilon == 1e-3


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"model": {"n": 4, "N": 6, "spins": 3}}, "model.spins"),
        ({"typo": 1}, "typo"),
        ({"model": {"n": 1, "N": 6}}, "model.n"),
        ({"truncation": {"epsilon": 2.0}}, "truncation.epsilon"),
        ({"truncation": {"epsilon": "abc"}}, "truncation.epsilon"),
        ({"task": {"kind": "dance"}}, "task.kind"),
        ({"task": {"kind": "simulate", "window": [3, 9]}}, "task.window"),
        ({"task": {"kind": "erase_recover"}, "model": {"n": 4, "N": 5}}, "model.N"),
        ({"task": {"kind": "transfer", "bob": 3}}, "task.alice"),
        ({"task": {"kind": "echo", "window": [1, 3], "echo_k": 5}}, "task.echo_k"),
        ({"seeds": []}, "seeds"),
        ({"optimizer": {"learning_rate": -1.0}}, "optimizer"),
    ],
)
def test_config_errors_name_the_field(patch, field):
    data = _small()
    data.update(patch)
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        from_dict(data)


def test_dump_round_trip(tmp_path):
    cfg = from_dict(_small("echo", window=[1, 4]))
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_missing_config_is_a_config_error(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_run_simulate_and_export(tmp_path):
    cfg = _write(tmp_path, _small(random_controls=4, infoflow=True, light_cone=True))
    out = tmp_path / "art"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    res = manifest["results"]
    assert max(res["max_bloch_deviation_none"], res["max_bloch_deviation_random"]) <= 1e-3
    assert "main" in manifest["roms"]
    assert not (out / ".lock").exists()
    plots = out / "plots"
    index = json.loads((plots / "index.json").read_text())
    assert "trajectories.csv" in index["files"] and "ranks.csv" in index["files"]
    assert any(f.startswith("heatmap_") for f in index["files"])
    # export again to another place via the subcommand
    assert main(["export", str(out), "--out", str(tmp_path / "p2")]) == 0
    assert sorted(p.name for p in (tmp_path / "p2").iterdir()) == sorted(p.name for p in plots.iterdir())


def test_cli_stages(tmp_path):
    cfg = _write(tmp_path, _small("echo", window=[2, 4]))
    out = tmp_path / "a"
    assert main(["build-rom", "--config", str(cfg), "--out", str(out)]) == 0
    assert list(out.glob("rom_*.npz"))
    out2 = tmp_path / "b"
    assert main(["optimize", "--config", str(cfg), "--out", str(out2), "--seed-override", "3"]) == 0
    m = json.loads((out2 / "manifest.json").read_text())
    assert m["seeds"] == [3]
    ctrl = sorted(out2.glob("controls_*.npz"))[0]
    out3 = tmp_path / "c"
    assert main(["infoflow", "--config", str(cfg), "--out", str(out3), "--controls", str(ctrl)]) == 0
    assert len(list(out3.glob("infoflow_*.csv"))) == 2


def test_optimize_stage_rejects_simulate(tmp_path, capsys):
    cfg = _write(tmp_path, _small())
    assert main(["optimize", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "nothing to optimize" in capsys.readouterr().err


def test_bad_threads(tmp_path):
    cfg = _write(tmp_path, _small())
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "0"]) == 2


def test_busy_directory_refused(tmp_path):
    cfg = _write(tmp_path, _small())
    out = tmp_path / "busy"
    out.mkdir()
    (out / ".lock").touch()
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 1


def test_export_before_run_fails(tmp_path):
    with pytest.raises(Exception):
        export_plot_data(tmp_path)
    assert main(["export", str(tmp_path)]) == 1
    assert not (tmp_path / "plots").exists()


def test_export_of_empty_run_leaves_nothing(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"name": "x"}))
    assert main(["export", str(tmp_path)]) == 1
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]


def test_output_env_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("ROMCONTROL_OUT", str(tmp_path / "root"))
    cfg = from_dict(_small())
    assert cfg.output_dir() == tmp_path / "root" / "tiny_simulate"


def test_trajectory_csv_parses(tmp_path):
    cfg = _write(tmp_path, _small())
    out = tmp_path / "t"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    data = np.loadtxt(out / "trajectory_rom_none.csv", delimiter=",", skiprows=1)
    assert data.shape == (7, 5)
