import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


@pytest.fixture(scope="session")
def synthetic_catalog(tmp_path_factory):
    """The 12-item, 2-band synthetic catalog over a 16x16 area; returns (root, area)."""
    from smartcube.synthetic import make_catalog

    root = str(tmp_path_factory.mktemp("synthetic"))
    area = make_catalog(root, n_items=12, bands=("b1", "b2"), seed=0)
    return root, area


@pytest.fixture(scope="session")
def fixture_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines at the end of the run."""
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
