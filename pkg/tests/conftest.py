import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fundcat import synthgen  # noqa: E402
from fundcat.preprocess import impute_and_round  # noqa: E402


@pytest.fixture(scope="session")
def small_universe():
    """600 funds in 8 categories, raw (with missing cells)."""
    return synthgen.generate_universe(synthgen.preset("small"))


@pytest.fixture(scope="session")
def small_imputed(small_universe):
    return impute_and_round(small_universe)


@pytest.fixture(scope="session")
def small_csv(tmp_path_factory, small_universe):
    path = tmp_path_factory.mktemp("data") / "small.csv"
    small_universe.to_csv(path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
