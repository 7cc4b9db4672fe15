import numpy as np
import pytest

from aimreg.config import ExperimentConfig
from aimreg.experiment import _calibration
from aimreg.model import EXAMPLE_BOX, example_immersion, example_plant
from aimreg.regulator import RegulatorDesign, RegulatorGains, default_ell, default_roots

RHO = np.array([2.0, 1.0, 1.5])


@pytest.fixture(scope="session")
def calibration():
    """Clamp radius and whitening basis of the default experiment (computed once)."""
    cfg = ExperimentConfig()
    return _calibration(cfg.box_lower, cfg.box_upper, cfg.w0, cfg.z0, cfg.sat_factor, cfg.roots, True)


@pytest.fixture(scope="session")
def example(calibration):
    """Plant, whitened clamped immersion and a (10, 10) design."""
    Y, T = calibration
    im = example_immersion(Y, 0.1 * Y).reparametrize(T)
    gains = RegulatorGains(default_roots(4), 10.0, 10.0, default_ell(im, EXAMPLE_BOX))
    return example_plant(), im, RegulatorDesign.from_gains(gains, im.dims)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
