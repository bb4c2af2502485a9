import numpy as np
import pytest

from wxdepth.core import CameraCalibration

_ACCEPTANCE = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    cid, title = marker.args
    entry = _ACCEPTANCE.setdefault(cid, {"title": title, "ok": True, "ran": False})
    if call.when == "call" or call.excinfo is not None:
        entry["ran"] = True
        if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
            entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[cid]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {cid:2d}: {status}  {e['title']}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def identity_calib():
    return CameraCalibration(fx=700.0, fy=700.0, cx=600.0, cy=180.0, image_width=1242, image_height=375)

