from importlib import resources
from pathlib import Path

import pytest

from queryvar import core

TOY = Path(str(resources.files("queryvar.data") / "toy"))
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def toy_dir():
    return TOY


@pytest.fixture(autouse=True)
def _reset_stopwords():
    yield
    core.set_stopwords(None)


# one summary line per acceptance criterion, pass or fail
_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _criteria[name] = report.outcome
    elif report.outcome != "passed":  # setup or teardown error
        _criteria[name] = "failed"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        num, _, label = name[len("test_criterion_"):].partition("_")
        status = "PASS" if _criteria[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {status}  {label.replace('_', ' ')}")
