import numpy as np
import pytest

from aimreg.model import EXAMPLE_DIMS, coupled_example_plant, example_plant
from aimreg.regulator import RegulatorState
from aimreg.simulation import ClosedLoop, StateLayout

RHO = np.array([2.0, 1.0, 1.5])


def start(loop, rng=None):
    rs = RegulatorState.zeros(EXAMPLE_DIMS)
    if rng is not None:
        rs = RegulatorState(rng.normal(size=4), rng.normal(size=5), rng.normal(scale=0.3, size=(3, 5)))
    return loop.layout.pack(RHO, [1.0, 0.0], [0.5, 0.0], 0.2, rs)


def test_layout_roundtrip(rng):
    layout = StateLayout(EXAMPLE_DIMS)
    rs = RegulatorState(rng.normal(size=4), rng.normal(size=5), rng.normal(size=(3, 5)))
    x = layout.pack(RHO, [1, 2], [3, 4], 0.5, rs)
    assert x.size == layout.size == 32
    back = layout.regulator_state(x)
    assert np.array_equal(back.X, rs.X)
    assert layout.split(x)["e"] == 0.5


def test_compiled_matches_generic(example, rng):
    plant, im, design = example
    loop = ClosedLoop(plant, im, design)
    x0 = start(loop, rng)
    fast = loop.simulate(x0, 1.0, compiled=True)
    slow = loop.simulate(x0, 1.0, compiled=False)
    assert np.max(np.abs(fast.states - slow.states)) <= 1e-10
    assert np.allclose(fast.channel("u"), slow.channel("u"), atol=1e-10)


def test_compiled_matches_generic_coupled(example, rng):
    _, im, design = example
    loop = ClosedLoop(coupled_example_plant(0.1), im, design)
    assert loop.has_kernel()
    x0 = start(loop, rng)
    fast = loop.simulate(x0, 1.0, compiled=True)
    slow = loop.simulate(x0, 1.0, compiled=False)
    assert np.max(np.abs(fast.states - slow.states)) <= 1e-10
    assert not np.array_equal(fast.states[-1, :3], RHO)


def test_compiled_matches_generic_corrupted(example):
    plant, im, design = example
    loop = ClosedLoop(plant, im, design.corrupted(-design.K))
    x0 = start(loop)
    fast = loop.simulate(x0, 0.5, compiled=True)
    slow = loop.simulate(x0, 0.5, compiled=False)
    assert np.max(np.abs(fast.states - slow.states)) <= 1e-10


def test_arbitrary_couplings_have_no_kernel(example):
    _, im, design = example
    plant = example_plant().with_couplings(s_rho=lambda r, w, z, e: np.ones(3))
    loop = ClosedLoop(plant, im, design)
    assert not loop.has_kernel()
    with pytest.raises(ValueError):
        loop.simulate(start(loop), 0.1, compiled=True)


def test_parameters_frozen_without_couplings(example):
    plant, im, design = example
    loop = ClosedLoop(plant, im, design)
    traj = loop.simulate(start(loop), 5.0, record_every=50)
    assert np.array_equal(traj.states[:, :3], np.tile(RHO, (len(traj), 1)))


def test_control_channel(example):
    plant, im, design = example
    loop = ClosedLoop(plant, im, design)
    traj = loop.simulate(start(loop), 0.2)
    parts = loop.layout.split(traj.states)
    assert np.allclose(traj.channel("u"), parts["xi"][:, 0] - design.gains.k * parts["e"])
