import sys

import numpy as np
import pytest
from hypothesis import settings

from philab.orlicz import NFunction

settings.register_profile("philab", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("philab")

ALL_FAMILIES = [
    NFunction.power(1.5),
    NFunction.power(2),
    NFunction.power(3),
    NFunction.powerlog(2),
    NFunction.maxpowers(1.5, 3),
    NFunction.minpowers(1.5, 3),
]
# C^2 and convex on (0, inf)
SMOOTH_FAMILIES = ALL_FAMILIES[:4]


def fam_id(phi):
    return phi.label()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
