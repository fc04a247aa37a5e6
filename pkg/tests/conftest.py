import numpy as np
import pytest

from rffgam.mixture import PipelineConfig


def regime_data(n=1200, seed=0):
    """Two regimes separated along x0, each additive in the other columns."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 3))
    y = np.where(X[:, 0] > 0, np.sin(2 * X[:, 1]) + X[:, 2], X[:, 2] ** 2 - X[:, 1])
    return X, y + 0.05 * rng.normal(size=n)


@pytest.fixture(scope="session")
def regime():
    return regime_data()


@pytest.fixture(scope="session")
def small_config():
    return PipelineConfig(K=120, lam=1.0, delta=0.1, resample_iters=2, d=2, L=3,
                          n_knots=8, seed=4)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(name, ok, detail):
        status = "INFO" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append(f"{status}  {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
