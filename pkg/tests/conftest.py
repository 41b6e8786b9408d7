import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bangband import Box, ControlField, Mesh1D

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def unit_box():
    return Box(lo=[-1.0], hi=[1.0])


@pytest.fixture
def mesh8():
    return Mesh1D.uniform(0.0, 1.0, 8)


@pytest.fixture
def zero_field(mesh8):
    return ControlField.constant(mesh8, [0.0])


def sign_rule_field(mesh, flip_at=0.5):
    """+1 left of the switch, -1 right of it (cell midpoint rule)."""
    vals = np.where(mesh.midpoints < flip_at, 1.0, -1.0)
    return ControlField(mesh, vals[:, None])
