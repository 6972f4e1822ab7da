import numpy as np
import pytest

from alma_recon import (
    CoilSensitivities,
    SamplingMask,
    SenseOperator,
)

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-scale (384 x 384) reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="full-scale run; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_operator(rng, n=8, n_coils=2, lines=(2, 5, 7)):
    coils = CoilSensitivities(crandn(rng, n_coils, n, n))
    return SenseOperator(coils, SamplingMask(n, lines))
