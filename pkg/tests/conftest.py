import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None or rep.when not in ("setup", "call"):
        return
    n, title = m.args
    if rep.when == "setup" and rep.passed:
        return
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    prev = _CRITERIA.get(n)
    if prev is None or prev[0] == "PASS":
        _CRITERIA[n] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")


@pytest.fixture(autouse=True)
def _conservation_guard(monkeypatch):
    """Every simulation finished anywhere in the suite must satisfy
    RHD + RHM == bytes requested, counted independently of the accounting."""
    from dlcache.cache import Simulator

    process, finish = Simulator.process_request, Simulator.finish

    def counted(self, req):
        out = process(self, req)
        self._requested_bytes = getattr(self, "_requested_bytes", 0) + req.size
        return out

    def checked(self):
        acc = finish(self)
        requested = getattr(self, "_requested_bytes", 0)
        assert acc.rhd + acc.rhm == requested, (
            f"byte conservation broken: rhd {acc.rhd} + rhm {acc.rhm} != requested {requested}")
        return acc

    monkeypatch.setattr(Simulator, "process_request", counted)
    monkeypatch.setattr(Simulator, "finish", checked)
