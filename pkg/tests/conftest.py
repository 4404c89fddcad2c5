import numpy as np
import pytest
from hypothesis import settings

from hfsad._rng import derive_rng
from hfsad.problems import GeneratorParams, generate_instance
from hfsad.simulator import RunConfig

settings.register_profile("default", deadline=None, max_examples=200)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cfg():
    return RunConfig(N_l=(4, 3, 5), M=6, K_z=20, K_M=2, K_a=3, p_c=1.0, seed=7)


@pytest.fixture(scope="session")
def small_instance(small_cfg):
    return generate_instance(small_cfg, GeneratorParams(s=0.6), derive_rng(7, 0, "data"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
