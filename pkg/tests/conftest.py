"""Shared fixtures for the engine test suite."""
import numpy as np
import pytest

from eyesim.geometry import CoordinateMap
from eyesim.simulator import Simulator
from eyesim.state import SimState, ToolState, default_anatomy
from eyesim.tools import ToolClass


@pytest.fixture(scope="session")
def m128():
    return CoordinateMap(128, 128, 1.0)


@pytest.fixture(scope="session")
def sim(m128):
    return Simulator(coord_map=m128)


@pytest.fixture()
def base_state():
    return SimState(anatomy=default_anatomy())


@pytest.fixture()
def state_with_tool():
    tool = ToolState(
        tool_class=ToolClass.KERATOME,
        tip=(0.30, 0.10),
        orientation=np.pi,
        present=True,
    )
    return SimState(anatomy=default_anatomy(), tools=(tool,))
