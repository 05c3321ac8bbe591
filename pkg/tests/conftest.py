from pathlib import Path

import numpy as np
import pytest

from rand_acim.cocycle import CocycleSpec, GalerkinScheme, UlamScheme, push_forward
from rand_acim.maps import make_family

DATA = Path(__file__).parent / "data"


def read_xy(path):
    arr = np.loadtxt(path, delimiter=",", skiprows=1)
    return arr[:, 0], arr[:, 1]


@pytest.fixture(scope="session")
def example():
    return make_family("example35")


@pytest.fixture(scope="session")
def ulam_run(example):
    """Reference Ulam run, k=1000, q=1000, recorded through step 26."""
    spec = CocycleSpec(example, scheme=UlamScheme(1000, 1000), steps=26)
    return spec, push_forward(spec, [20, 21, 22, 25, 26])


@pytest.fixture(scope="session")
def galerkin_run(example):
    spec = CocycleSpec(example, scheme=GalerkinScheme(100), steps=22)
    return spec, push_forward(spec, [20, 21, 22])


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = {}


def report(criterion, passed, detail):
    ACCEPTANCE[criterion] = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
