import numpy as np
import pytest

from pcfg_discovery import linear_grammar, universal_grammar
from pcfg_discovery.fitting import Dataset


@pytest.fixture
def g_linear():
    return linear_grammar(2, 0.5)


@pytest.fixture
def g_universal():
    return universal_grammar(["x", "y"])


@pytest.fixture
def xy_data():
    rng = np.random.default_rng(7)
    x = rng.uniform(1, 5, 60)
    y = rng.uniform(1, 5, 60)
    return lambda f: Dataset.from_columns({"x": x, "y": y, "f": f(x, y)}, "f")


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion (printed in the summary)."""

    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
