import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hermitian(rng, d):
    A = crandn(rng, d, d)
    return 0.5 * (A + A.conj().T)


def random_psd(rng, d, rank=None):
    G = crandn(rng, d, rank or d)
    return G @ G.conj().T


def random_unitary(rng, d):
    Q, R = np.linalg.qr(crandn(rng, d, d))
    return Q * (np.diag(R) / np.abs(np.diag(R)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_line():
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def record(number, text, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {text}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
