import numpy as np
import pytest

from wmcgrad.logic import CnfFormula, WeightMap

EXAMPLE_DIMACS = """c (a or b) and (not b or c)
p cnf 3 2
c p weight 1 0.5 0
c p weight 2 0.1 0
c p weight 3 0.25 0
1 2 0
-2 3 0
"""


@pytest.fixture
def example():
    phi = CnfFormula.from_clauses(3, [(1, 2), (-2, 3)])
    w = WeightMap(np.array([0.5, 0.1, 0.25]))
    return phi, w


@pytest.fixture
def example_file(tmp_path):
    path = tmp_path / "example.cnf"
    path.write_text(EXAMPLE_DIMACS)
    return path


ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
