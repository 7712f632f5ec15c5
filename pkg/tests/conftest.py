import os
from pathlib import Path

import numpy as np
import pytest

from survdiag.data import Dataset

GBSG_ENV = "SURVDIAG_GBSG_CSV"
GBSG_COVARIATES = ["treat", "age", "men", "size", "grade", "nodes", "prog", "oest"]


def gbsg_path():
    path = os.environ.get(GBSG_ENV)
    return Path(path) if path and Path(path).exists() else None


@pytest.fixture
def gbsg():
    path = gbsg_path()
    if path is None:
        pytest.skip(f"breast-cancer CSV not supplied (set {GBSG_ENV})")
    from survdiag.data import load_csv
    return load_csv(path, "time", "status", GBSG_COVARIATES)


@pytest.fixture
def weibull_data():
    """n = 300 draws from a Weibull AFT with one binary and one continuous covariate."""
    rng = np.random.default_rng(11)
    n = 300
    x = np.column_stack([rng.integers(0, 2, n), rng.normal(size=n)])
    w = np.log(rng.standard_exponential(n))
    logt = 1.0 + 0.5 * x[:, 0] - 0.3 * x[:, 1] + 0.7 * w
    c = rng.exponential(12.0, n)
    t = np.exp(logt)
    return Dataset(np.minimum(t, c), (t < c).astype(int), x, ["g", "z"])


@pytest.fixture
def toy3():
    return Dataset([1.0, 2.0, 3.0], [1, 0, 1], [[0.5], [1.5], [-1.0]], ["x"])


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS):
        terminalreporter.write_line(line)
