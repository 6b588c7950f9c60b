import numpy as np
import pytest

from firal.model import ModelParams


def random_params(rng, n_classes=3, n_features=2, scale=1.0, intercept=True):
    d = (n_classes - 1) * (n_features + int(intercept))
    return ModelParams(scale * rng.standard_normal(d), n_classes, n_features, intercept)


def central_diff(fun, theta, h):
    theta = np.asarray(theta, dtype=float)
    out = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        out.append((np.asarray(fun(theta + e)) - np.asarray(fun(theta - e))) / (2 * h))
    return np.stack(out, axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
