import math

import numpy as np
import pytest

from pipsim.core import SensorConfig, validate_config


@pytest.fixture
def cfg():
    """Default 128x128 sensor."""
    return validate_config(SensorConfig())


@pytest.fixture
def small_cfg():
    """32x32 px sensor for fast end-to-end runs."""
    return validate_config(SensorConfig(width_px=32, height_px=32))


@pytest.fixture
def ideal_cfg():
    """Small sensor with every nonideality off (no dark, no leak)."""
    return validate_config(
        SensorConfig(width_px=32, height_px=32, i_dark=0.0, r_leak=math.inf))


def make_cfg(**kwargs):
    return validate_config(SensorConfig(**kwargs))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
