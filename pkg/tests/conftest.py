import numpy as np
import pytest

from sqkd.attack import AttackPair, rotation

CRITERIA = {
    1: "threshold grid reproduction",
    2: "rate curves per noise ratio",
    3: "bound soundness on random attacks",
    4: "decomposition constraints",
    5: "simulator matches analytic statistics",
    6: "noiseless end-to-end run",
    7: "entropy core",
    8: "determinism",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion covered by the test")
    config._criterion_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        results = item.config._criterion_results.setdefault(marker.args[0], [])
        details = [v for k, v in item.user_properties if k == "detail"]
        results.append((item.name, report.outcome, details))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criterion_results", {})
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(CRITERIA):
        runs = results.get(number)
        if not runs:
            tr.write_line(f"[----] {number}. {CRITERIA[number]}: not run")
            continue
        failed = [name for name, outcome, _ in runs if outcome != "passed"]
        status = "PASS" if not failed else "FAIL"
        tr.write_line(f"[{status}] {number}. {CRITERIA[number]}: {len(runs) - len(failed)}/{len(runs)} checks passed")
        for name, outcome, details in runs:
            if outcome != "passed" or details:
                for d in details or [""]:
                    tr.write_line(f"         {outcome:6s} {name} {d}".rstrip())


@pytest.fixture
def detail(request):
    """Attach a line of context to the acceptance summary."""
    def add(text: str) -> None:
        request.node.user_properties.append(("detail", text))
    return add


@pytest.fixture
def small_rotation_attack():
    return AttackPair(np.eye(2), rotation(0.1), 1, 1)
