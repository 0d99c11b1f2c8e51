from __future__ import annotations

import numpy as np
import pytest

from hybrid_manip.env import Env, load_scenario

PICK_PLACE_INSTRUCTION = "Pick up the red cube and place it on the blue platform"


@pytest.fixture
def pick_place():
    return load_scenario("pick_place")


@pytest.fixture
def env(pick_place):
    return Env(pick_place, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
