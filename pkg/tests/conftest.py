import numpy as np
import pytest
from hypothesis import settings

from pcef.evidence import Frame, MassFunction

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# Acceptance outcomes, filled in by tests/test_acceptance.py.
ACCEPTANCE = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def random_mass(rng: np.random.Generator, n: int, omega_floor: float = 0.0, sparse: bool = True) -> MassFunction:
    """Random BBA on a frame of size ``n``; ``omega_floor`` keeps it non-dogmatic."""
    frame = Frame.of_size(n)
    size = frame.size
    m = np.zeros(size)
    if sparse:
        k = int(rng.integers(1, size))
        focal = rng.choice(np.arange(1, size), size=k, replace=False)
    else:
        focal = np.arange(1, size)
    m[focal] = rng.dirichlet(np.ones(len(focal)))
    m *= 1.0 - omega_floor
    m[frame.omega] += omega_floor
    return MassFunction(frame, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
        passed, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {name}: {detail}")
