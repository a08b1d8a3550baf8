import sys

import numpy as np
import pytest

from unplugged.replay import SkillSampler, generate_dataset


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(300, SkillSampler.parse("uniform"), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda l: int(l.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
