import numpy as np
import pytest

from labelcorr.data import LabeledDataset

# Hand-enumerated recovery fixture shared by metrics, noise and cli tests.
FIXTURE_TRUE = np.array([0, 1, 2, 0, 1])
FIXTURE_NOISY = np.array([0, 2, 2, 1, 1])
FIXTURE_PRED = np.array([0, 1, 1, 0, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def five_sample():
    features = np.arange(10, dtype=float).reshape(5, 2)
    return LabeledDataset(features, FIXTURE_NOISY.copy(), 3, FIXTURE_TRUE.copy())


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-10:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the lines are echoed at the end of the session."""

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
