import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mfg_grid.grid_model import GeneratorCost, Line, Network, load_network
from mfg_grid.persist import _data_path

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def ieee14():
    return load_network(_data_path("ieee14.net"))


@pytest.fixture(scope="session")
def load_shape():
    a = np.loadtxt(_data_path("load_shape.csv"), delimiter=",", skiprows=1)
    return a[:, 1], a[:, 2]


def one_bus(alpha=0.02, beta=150.0, cap=600.0):
    return Network(1, [], [GeneratorCost(alpha, beta, 0.0, cap)], np.zeros((0, 1)))


def two_bus(line_cap=100.0, a=(0.02, 0.04), b=(150.0, 200.0), cap=(600.0, 600.0)):
    gens = [GeneratorCost(a[0], b[0], 0.0, cap[0]), GeneratorCost(a[1], b[1], 0.0, cap[1])]
    return Network.from_reactances(2, [Line(0, 1, line_cap, 0.1)], gens, slack_bus=0)


# ------------------------------------------------------ acceptance report ----

ACCEPTANCE = {}


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
