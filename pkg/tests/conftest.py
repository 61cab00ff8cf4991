import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.outcome != "passed":
        prev = _ACCEPTANCE.get(key, "PASS")
        _ACCEPTANCE[key] = "FAIL" if report.outcome == "failed" or prev == "FAIL" else (
            "SKIP" if report.outcome == "skipped" else prev)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), verdict in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {num}: {verdict}  {name}")
