import numpy as np
import pytest

from mia_kde.fixtures import random_schema, sample_table


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mixed_pair(seed, n_q=200, n_r=300, n_features=None, integer_valued=True):
    """Random mixed-schema query/reference tables. Values sit on a coarse grid
    so exact ties and zero distances actually occur."""
    g = np.random.default_rng(seed)
    p = n_features or int(g.integers(5, 16))
    schema = random_schema(g, p)
    q = sample_table(g, schema, n_q, integer_valued=integer_valued)
    r = sample_table(g, schema, n_r, shift=0.3, integer_valued=integer_valued)
    return q, r


@pytest.fixture
def make_mixed_pair():
    return mixed_pair


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
