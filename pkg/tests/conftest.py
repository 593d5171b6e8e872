import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gfml.model import master_controller  # noqa: E402

_RESULTS = []


@pytest.fixture(scope="session")
def master():
    return master_controller()


@pytest.fixture
def criterion():
    """Record an acceptance criterion's outcome, then assert it."""

    def check(name, passed, detail=""):
        _RESULTS.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
