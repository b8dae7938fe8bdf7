import numpy as np
import pytest

from romcontrol.errors import InvalidInputError, ResourceError
from romcontrol.exactsim import (
    InfoFlowMap,
    causal_cone_dim,
    controls_hash,
    disorder_average,
    evolve,
    info_flow,
    light_cone_dim,
    process_channel,
    site_trajectory,
)
from romcontrol.models import SX, MBLParams, XYZParams, mbl_layout, xyz_layout
from romcontrol.rom import mutual_information
from romcontrol.sequence import ControlSequence, random_unitaries

IDLE = XYZParams((0, 0, 0), (0, 0, 0), 0.2)


def test_two_spin_single_step(xyz_params):
    lay = xyz_layout(xyz_params, 2, 1)
    out = evolve(lay).final[0]
    assert np.allclose(out, lay.layer[0] @ lay.initial_state())


def test_control_acts_before_the_step(xyz_params):
    lay = xyz_layout(xyz_params, 2, 1)
    out = evolve(lay, controls=ControlSequence.single(0, SX)).final[0]
    assert np.allclose(out, lay.layer[0] @ np.kron(SX, np.eye(2)) @ lay.initial_state())


def test_norm_is_preserved(xyz_params, rng):
    lay = xyz_layout(xyz_params, 8, 30)
    c = ControlSequence(random_unitaries(30, 2, rng), 0, 30)
    psi = evolve(lay, controls=c).final
    assert abs(np.linalg.norm(psi) - 1) <= 1e-12


def test_keep_states(small_layout):
    traj = evolve(small_layout, keep_states=True)
    assert len(traj.states) == small_layout.N + 1
    ref = site_trajectory(small_layout)
    assert np.allclose(traj.site_trajectory(0).rho, ref.rho)
    with pytest.raises(InvalidInputError):
        evolve(small_layout).site_trajectory(0)


def test_resource_cap(small_layout):
    with pytest.raises(ResourceError):
        evolve(small_layout, cap=4)


def test_bad_initial_state(small_layout):
    with pytest.raises(InvalidInputError):
        evolve(small_layout, psi0=np.ones(2**5))
    with pytest.raises(InvalidInputError):
        evolve(small_layout, psi0=np.ones(4) / 2)


def test_info_flow_starts_on_target(small_layout):
    f = info_flow(small_layout, 2)
    assert f.values.shape == (small_layout.N + 1, 5)
    expected = np.zeros(5)
    expected[2] = 2.0
    assert np.allclose(f.values[0], expected, atol=1e-10)
    assert np.all((f.values >= 0) & (f.values <= 2))


def test_info_flow_idle_circuit():
    lay = xyz_layout(IDLE, 4, 3)
    f = info_flow(lay, 1)
    assert np.allclose(f.self_information, 2.0)
    assert np.allclose(np.delete(f.values, 1, axis=1), 0.0, atol=1e-10)


def test_process_channel_swap_moves_information():
    swap = np.eye(4)[[0, 2, 1, 3]]
    from romcontrol.models import CircuitLayout

    lay = CircuitLayout(2, 1, (swap,), 0)
    assert mutual_information(process_channel(lay, 0, 1, 1)) == pytest.approx(2.0)
    assert mutual_information(process_channel(lay, 0, 0, 1)) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(InvalidInputError):
        process_channel(lay, 0, 2, 1)


def test_light_cone_idle_circuit():
    lay = xyz_layout(IDLE, 4, 3)
    assert list(light_cone_dim(lay, l=1)) == [2, 2, 2, 2]


def test_light_cone_is_monotone_and_within_causal_cone(xyz_params):
    lay = xyz_layout(xyz_params, 6, 8, target=3)
    lc = light_cone_dim(lay)
    cc = causal_cone_dim(6, 3, 8)
    assert np.all(np.diff(lc) >= 0)
    assert np.all(lc <= cc)
    assert lc[-1] == 2**6


def test_causal_cone_examples():
    assert list(causal_cone_dim(5, 0, 3)) == [2, 32, 32, 32]
    assert list(causal_cone_dim(5, 3, 4)) == [2, 2**3, 2**4, 2**5, 2**5]


def test_rescale_and_export(tmp_path):
    f = InfoFlowMap(np.array([[2.0, 0.0], [1.0, 0.5]]), 0, 2, 1, "abc")
    assert np.allclose(f.rescaled(), np.log(f.values + 1e-2))
    f.export(tmp_path / "m.csv", tmp_path / "m.json")
    data = np.loadtxt(tmp_path / "m.csv", delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1:], f.rescaled())


def test_controls_hash_is_stable(rng):
    c = ControlSequence(random_unitaries(3, 2, rng), 1, 4)
    assert controls_hash(c) == controls_hash(ControlSequence(c.gates.copy(), 1, 4))
    assert controls_hash(None) == "none"
    assert controls_hash(c) != controls_hash(ControlSequence(c.gates, 2, 5))


def test_disorder_average_examples():
    def fake(seed):
        return InfoFlowMap(np.full((2, 2), float(seed)), 0, 2, 1)

    avg = disorder_average(fake, [1, 2, 3])
    assert np.allclose(avg.mean.values, 2.0)
    assert np.allclose(avg.mean_self_information, [2.0, 2.0])
    threaded = disorder_average(fake, [1, 2, 3], threads=2)
    assert np.array_equal(threaded.mean.values, avg.mean.values)
    with pytest.raises(InvalidInputError):
        disorder_average(fake, [])


def test_disorder_average_of_mbl_maps():
    def one(seed):
        return info_flow(mbl_layout(MBLParams.from_seed(0.3, 4, seed), 4))

    avg = disorder_average(one, [0, 1])
    ref = (one(0).values + one(1).values) / 2
    assert np.allclose(avg.mean.values, ref)
