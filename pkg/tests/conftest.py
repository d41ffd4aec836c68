import numpy as np
import pytest

from ensemblekit.datagen import generate, make_pool_spec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_pool():
    spec = make_pool_spec(
        400, 0.35, [1.0, 0.8, 0.6, 0.4, 0.3], [0.8, 0.8, 0.3, 0.0, 0.0],
        alpha=[1, 3, 1, 3, 1], beta=[0, 1, 0, 1, 0], bags=3, seed=7,
    )
    matrix, y, _ = generate(spec)
    return matrix, y


@pytest.fixture
def val_test_pool():
    spec = make_pool_spec(800, 0.3, [1.2, 0.9, 0.7, 0.5, 0.3, 0.2], [0.6] * 6, bags=2, seed=3)
    matrix, y, _ = generate(spec)
    return (matrix.take_rows(range(400)), y[:400]), (matrix.take_rows(range(400, 800)), y[400:])



ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Collect one summary line per acceptance criterion."""

    def add(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
