import numpy as np
import pytest

from pcgs.pointcloud import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def grid_plane(n=8, z=0):
    ys, xs = np.mgrid[0:n, 0:n]
    pts = np.stack([xs.ravel(), ys.ravel(), np.full(n * n, z)], axis=1)
    return PointCloud(pts.astype(np.int64), np.tile([0.0, 0.0, 1.0], (n * n, 1)), 8)


# --- acceptance reporting ----------------------------------------------------
# Tests marked ``acceptance(n, title)`` get one PASS/FAIL line in the terminal
# summary; ``criterion_detail`` attaches the measured numbers.

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.fixture
def criterion_detail(request):
    details = []
    request.node.acceptance_details = details
    return details.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "notes": []})
    if not rep.passed:
        entry["ok"] = False
    if rep.when == "call":
        entry["notes"] += getattr(item, "acceptance_details", [])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        line = f"criterion {number:>2} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["notes"]:
            line += "  [" + "; ".join(e["notes"]) + "]"
        terminalreporter.write_line(line)
