import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_pgm(path, rows):
    """Write raw bytes as a P5 file; ``rows`` is a 2-D list of ints."""
    arr = np.asarray(rows, dtype=np.uint8)
    path.write_bytes(b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0]) + arr.tobytes())
    return path


# -- acceptance report: one line per criterion --------------------------------

_CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    name = dict(report.user_properties).get("criterion")
    if name is None or (report.when != "call" and report.passed):
        return
    entry = _CRITERIA.setdefault(name, {"ok": True, "measured": []})
    entry["ok"] &= report.passed or report.skipped
    entry["measured"] += [v for k, v in report.user_properties if k == "measured"]


@pytest.fixture(autouse=True)
def _tag_criterion(request, record_property):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        record_property("criterion", mark.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, entry in _CRITERIA.items():
        status = "PASS" if entry["ok"] else "FAIL"
        detail = "; ".join(entry["measured"])
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))
