from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from evakit.core import DEFAULT_FRAME, Scanpath
from evakit.eva import EvaDims, init_weights

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "corpus10"
SMALL_DIMS = EvaDims(conv_widths=(8, 8, 16, 16), periphery_dim=16, lower_hidden=16, upper_hidden=16, key_dim=8)


@pytest.fixture
def fixture_dir():
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def small_weights():
    return init_weights(SMALL_DIMS, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def path(xy, image_id="img", source="model", frame=DEFAULT_FRAME):
    return Scanpath.from_xy(image_id, source, frame, xy)


# PASS/FAIL lines recorded by test_acceptance.py, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
