"""Acceptance bookkeeping: one PASS/FAIL line per numbered criterion."""

import pytest

CRITERIA = {
    1: "corridor-12 heading alignment",
    2: "campus-5 drift mitigation",
    3: "campus-5 radio map quality",
    4: "Jacobian correctness",
    5: "oracle equivalence",
    6: "noiseless exactness",
    7: "monotonicity and determinism",
    8: "formula unit suite",
}

_outcomes: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): test backs numbered acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    failed_setup = rep.when == "setup" and not rep.passed
    if rep.when == "call" or failed_setup:
        detail = "; ".join(v for k, v in item.user_properties if k == "detail")
        _outcomes.setdefault(marker.args[0], []).append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        runs = _outcomes.get(n)
        if not runs:
            continue
        ok = all(passed for _, passed, _ in runs)
        details = [d for _, _, d in runs if d]
        line = f"criterion {n} ({CRITERIA[n]}): {'PASS' if ok else 'FAIL'} [{sum(p for _, p, _ in runs)}/{len(runs)} tests]"
        tr.write_line(line + (" " + " | ".join(details) if details else ""))
