import pytest

CRITERIA = {
    1: "default dynamics and first-return fixed point",
    2: "transversality over randomized runs",
    3: "rho = 1 tongue edge",
    4: "rho = 2/3 tongue",
    5: "rho = 1/2 tongue",
    6: "bistability island and SN/BC-S coincidence",
    7: "rho = 1 regime switch",
    8: "continuity transition in the rho = 1/4 tongue",
    9: "hard-switch staircase and phase locking",
    10: "property suites",
}

_outcomes = {}
_notes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.fixture
def note(request):
    """Attach a short measured value to the criterion line of the current test."""
    m = request.node.get_closest_marker("criterion")

    def add(text):
        if m is not None:
            _notes.setdefault(m.args[0], []).append(text)
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _outcomes.setdefault(m.args[0], []).append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        res = _outcomes.get(n)
        if not res:
            continue
        bad = [name for name, o in res if o != "passed"]
        status = "PASS" if not bad else "FAIL"
        line = f"criterion {n:>2} {status}  {CRITERIA[n]} ({len(res) - len(bad)}/{len(res)})"
        if bad:
            line += "  failing: " + ", ".join(bad)
        tr.write_line(line)
        for t in _notes.get(n, []):
            tr.write_line(f"              {t}")
