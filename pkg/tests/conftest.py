import sys

import numpy as np
import pytest

from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.pipeline import make_hierarchy
from mlbuckle.problems import cantilever_column


@pytest.fixture(scope="session")
def column():
    """Slender clamped-free column, 8 x 64 elements, uniform solid design."""
    s = cantilever_column(8, 64, width=1.0, P=1.0)
    model = FEModel(s.level, MaterialModel(), s.passive_solid)
    return s, model, np.ones(s.num_elements)


@pytest.fixture(scope="session")
def column_hier(column):
    return make_hierarchy(column[0], 3)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
