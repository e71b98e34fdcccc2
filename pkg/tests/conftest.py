import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))
PROBLEMS = ROOT / "problems"

from daecert.problem import load_problem  # noqa: E402


@pytest.fixture
def problem():
    def load(name):
        return load_problem(PROBLEMS / f"{name}.json")
    return load


def random_expression(rng, names, depth=3):
    """Random smooth expression text over ``names`` (no domain hazards)."""
    if depth == 0 or rng.uniform() < 0.2:
        if rng.uniform() < 0.7:
            return str(rng.choice(names))
        return f"({rng.uniform(-2, 2):.3f})"
    kind = rng.integers(0, 9)
    a = random_expression(rng, names, depth - 1)
    b = random_expression(rng, names, depth - 1)
    if kind == 0:
        return f"({a} + {b})"
    if kind == 1:
        return f"({a} - {b})"
    if kind == 2:
        return f"({a} * {b})"
    if kind == 3:
        return f"({a} / (1.5 + ({b})^2))"
    if kind == 4:
        return f"sin({a})"
    if kind == 5:
        return f"cos({a})"
    if kind == 6:
        return f"exp(sin({a}))"
    if kind == 7:
        return f"log(1 + ({a})^2)"
    return f"({a})^{int(rng.integers(2, 4))}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record one line each; printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
