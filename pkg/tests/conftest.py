import math

import numpy as np
import pytest

from ptcontrol.scalarmath import ShapeParams, TimeGain
from ptcontrol.sim import ClosedLoop, SimSettings
from ptcontrol.smc import SmcParams
from ptcontrol.synthesis import CanonicalSystem, ControllerParams


def example3_F(x, t):
    return 0.03 * x[0] + 0.01 * math.sin(x[1]) + 0.02 * math.sin(2.0 * t)


def example3_dbar(x):
    return 0.03 * (abs(x[0]) + 1.0)


def example3_loop(x0, t_p=2.0, boundary_layer=1e-3, disturbance=example3_F, **settings):
    plant = CanonicalSystem.chain(2, disturbance=disturbance, disturbance_bound=example3_dbar)
    cp = ControllerParams(ShapeParams(1.0, 1.0), 3.0, 1, TimeGain(t_p))
    sp = SmcParams(cp, (1.0,), boundary_layer)
    return ClosedLoop(plant, "smc", cp, SimSettings(**settings), np.array(x0, dtype=float), smc=sp)


@pytest.fixture
def report(capsys):
    """Print a line straight to the terminal, bypassing capture."""

    def emit(line):
        with capsys.disabled():
            print(line)

    return emit
