import numpy as np
import pytest

from reproto import Metric, Mlp, build_prototypes

METRICS = [Metric.L2, Metric.LINF]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def protos():
    return build_prototypes(4, 6, seed=3, epochs=50, eps=0.5)


@pytest.fixture
def proto_model(protos):
    return Mlp.init([5, 8, 8, 6], seed=7, protos=protos)


@pytest.fixture
def softmax_model():
    return Mlp.init([5, 8, 8, 4], seed=7)


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
