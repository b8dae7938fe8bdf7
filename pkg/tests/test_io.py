import numpy as np
import pytest

from romcontrol.control import LossHistory
from romcontrol.envnet import decompose_gate, env_channel, truncate_environment
from romcontrol.errors import InvalidInputError
from romcontrol.io import (
    load_controls,
    load_network,
    load_rom,
    save_controls,
    save_network,
    save_rom,
    write_loss_history,
)
from romcontrol.rom import rom_from_layout
from romcontrol.sequence import ControlSequence, random_unitaries


def test_network_round_trip(tmp_path):
    u = random_unitaries(1, 8, np.random.default_rng(0))[0]
    dec = decompose_gate(u, 2, 4)
    net = truncate_environment(env_channel(dec), dec, np.eye(4)[1], 5, 0.05, keep_isometries=True)
    back = load_network(save_network(tmp_path / "net.npz", net))
    assert back.ranks == net.ranks and back.step_errors == net.step_errors
    for a, b in zip(net.blocks + net.isometries, back.blocks + back.isometries):
        assert np.array_equal(a, b)
    assert np.array_equal(back.psi0, net.psi0)


def test_rom_round_trip(tmp_path, small_layout):
    rom = rom_from_layout(small_layout.with_target(2), 0.01)
    back = load_rom(save_rom(tmp_path / "rom.npz", rom))
    assert np.array_equal(back.a, rom.a)
    assert back.env_ranks == rom.env_ranks
    for m in range(rom.N):
        for x, y in zip(rom.env_blocks[m], back.env_blocks[m]):
            assert np.array_equal(x, y)
    assert back.meta == rom.meta
    assert np.array_equal(back.propagate().rho, rom.propagate().rho)


def test_controls_round_trip(tmp_path, rng):
    c = ControlSequence(random_unitaries(4, 2, rng), 3, 7)
    back = load_controls(save_controls(tmp_path / "c.npz", c))
    assert back.window == (3, 7) and np.array_equal(back.gates, c.gates)
    assert not list(tmp_path.glob("*.part"))


def test_wrong_format_rejected(tmp_path, rng):
    p = save_controls(tmp_path / "c.npz", ControlSequence.identity(0, 1))
    with pytest.raises(InvalidInputError):
        load_rom(p)
    with pytest.raises(InvalidInputError):
        load_controls(tmp_path / "missing.npz")
    np.savez(tmp_path / "plain.npz", x=np.zeros(2))
    with pytest.raises(InvalidInputError):
        load_controls(tmp_path / "plain.npz")


def test_loss_history_csv(tmp_path):
    h = LossHistory()
    h.append(1, 0.5, 0.1)
    h.append(2, 0.25, 0.05)
    write_loss_history(tmp_path / "loss.csv", h)
    data = np.loadtxt(tmp_path / "loss.csv", delimiter=",", skiprows=1)
    assert np.allclose(data, [[1, 0.5, 0.1], [2, 0.25, 0.05]])
