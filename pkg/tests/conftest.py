import pytest

from bassbridge import kernels

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion covered by a test")


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n, text = marker.args
    ok = call.excinfo is None
    entry = _criteria.setdefault(n, {"text": text, "ok": True, "tests": []})
    entry["ok"] &= ok
    entry["tests"].append((item.name, ok))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        failed = [name for name, ok in e["tests"] if not ok]
        status = "PASS" if e["ok"] else "FAIL"
        detail = "" if e["ok"] else f" (failing: {', '.join(failed)})"
        tr.write_line(f"criterion {n:2d} {status}: {e['text']}{detail}")
