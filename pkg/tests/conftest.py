"""Shared long-running simulations.  Each runs once per session."""

import dataclasses
import time

import numpy as np
import pytest

from wavekit.bohm import StreamingEnsemble, sample_positions
from wavekit.schrodinger2d import TwoSlitSetup, initial_packet_2d, run_two_slit

BOHM_SEED = 2024
BOHM_COUNT = 20000


@pytest.fixture(scope="session")
def two_slit_open():
    """Default geometry, both slits open, with a streamed Bohmian ensemble."""
    setup = TwoSlitSetup()
    psi0 = initial_packet_2d(setup.grid(), setup.packet_center, setup.packet_velocity, setup.packet_width)
    stream = StreamingEnsemble(
        psi0, sample_positions(psi0, BOHM_COUNT, BOHM_SEED), setup.dt, stride=5, plane_x=setup.observe_x
    )
    start = time.perf_counter()
    result = run_two_slit(setup, extra_callbacks=[stream])
    return result, stream, time.perf_counter() - start


@pytest.fixture(scope="session")
def two_slit_closed():
    base = TwoSlitSetup()
    setup = dataclasses.replace(base, screen=dataclasses.replace(base.screen, open_flags=(True, False)))
    start = time.perf_counter()
    result = run_two_slit(setup)
    return result, time.perf_counter() - start


def profile_array(profile):
    return np.array([p[0] for p in profile]), np.array([p[1] for p in profile])


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
