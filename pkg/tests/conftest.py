import numpy as np
import pytest

from eklab.discretization import Grid1D
from eklab.linop import on_grid
from eklab.model import MODEL_A, MODEL_B, Endstate
from eklab.soliton import compute_profile

# Frozen oracle values.
# NLS transverse eigensolve about the grey soliton (eklab.oracles, independent of linop),
# N = 512, X = 16.587, speed 0.5, golden section to 1e-7.
K0_NLS = 0.513003940349589
SIGMA0_NLS = 0.15961287489977102
# Reference peak of the growth curve used to seed cheaper tests.
K0_REF = 0.5129973142069445
SIGMA0_REF = 0.15961287485295542


@pytest.fixture(scope="session")
def end():
    return Endstate(1.0, 0.0, 0.5)


@pytest.fixture(scope="session")
def prof_a(end):
    return compute_profile(MODEL_A, end, 1024)


@pytest.fixture(scope="session")
def prof_b(end):
    return compute_profile(MODEL_B, end, 1024)


@pytest.fixture(scope="session")
def grid256(prof_a):
    return Grid1D(256, prof_a.half_length)


@pytest.fixture(scope="session")
def prof_a256(prof_a, grid256):
    return on_grid(prof_a, grid256)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def record_criterion():
    def record(cid, status, text):
        ACCEPTANCE_LINES[cid] = f"criterion {cid:2d} [{status.upper()}] {text}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[cid])
