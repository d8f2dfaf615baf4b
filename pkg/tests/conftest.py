import numpy as np
import pytest

from mentalbci.dataio import SynthSpec, synth_two_class


def random_pd(rng, n, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.geomspace(1.0, cond, n)) @ q.T


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def separable_ds():
    mixing = np.random.default_rng(123).standard_normal((30, 4))
    spec = SynthSpec(40, 30, 1792, 256.0, mixing, (8.0, 12.0), 10.0, 1.0)
    return synth_two_class(spec, seed=1), mixing


@pytest.fixture(scope="session")
def small_ds():
    mixing = np.random.default_rng(5).standard_normal((8, 3))
    spec = SynthSpec(20, 8, 512, 128.0, mixing, (8.0, 12.0), 10.0, 0.5)
    return synth_two_class(spec, seed=2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
