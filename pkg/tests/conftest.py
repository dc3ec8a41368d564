import pytest

from quantum_action import model, propagator
from quantum_action.model import ActionParams


@pytest.fixture(scope="session")
def double_well():
    return ActionParams(1.0, model.double_well_potential())


@pytest.fixture(scope="session")
def harmonic():
    return ActionParams(1.0, model.harmonic_potential(1.0, 1.0))


@pytest.fixture(scope="session")
def dw_spectrum(double_well):
    return propagator.solve_spectrum(double_well)


@pytest.fixture(scope="session")
def harmonic_spectrum(harmonic):
    # the 30th oscillator state reaches |x| ~ 8, so the default box leaks
    return propagator.solve_spectrum(harmonic, propagator.SpatialGrid(-12, 12, 2401), 30)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
