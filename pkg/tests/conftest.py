import math

import pytest

from d2d_offload.config import load_profile

REF_AREA = math.pi * 500.0 ** 2


@pytest.fixture(scope="session")
def cfg():
    return load_profile("table1")


@pytest.fixture(scope="session")
def net(cfg):
    return cfg.network


@pytest.fixture(scope="session")
def geo(cfg):
    return cfg.geometry


@pytest.fixture(scope="session")
def cache(cfg):
    return cfg.cache


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number].summary())
    passed = sum(r.passed for r in RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(RESULTS)} criteria pass")
