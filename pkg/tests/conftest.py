import sys
from pathlib import Path

import pytest

# lets test modules import the brute-force oracles as a plain module
sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    label = mark.args[0]
    detail = getattr(item, "acceptance_detail", "")
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE[label] = ("PASS" if rep.passed else "FAIL", detail, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s.split(".")[0])):
        status, detail, secs = _ACCEPTANCE[label]
        terminalreporter.write_line(f"[{status}] {label} ({secs:.1f} s) {detail}".rstrip())
