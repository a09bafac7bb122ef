"""Shared fixtures and the per-criterion acceptance summary."""

from __future__ import annotations

import logging

import pytest

CRITERIA = {
    1: "oracle counting end to end",
    2: "ray-vote micro-oracle",
    3: "two-cluster 3D segmentation",
    4: "jigsaw oracle and snap boundary",
    5: "placement constraint and oracle placement",
    6: "runtime invariants",
    7: "sampling tournament",
    8: "inpainting",
    9: "budget sweep monotonicity",
}

_outcomes: dict[int, list[tuple[str, bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion a test belongs to")
    logging.getLogger("visloop").setLevel(logging.WARNING)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _outcomes.setdefault(mark.args[0], []).append((item.name, rep.passed))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, desc in CRITERIA.items():
        results = _outcomes.get(n)
        if results is None:
            tr.write_line(f"criterion {n} ({desc}): NOT RUN")
            continue
        ok = all(passed for _, passed in results)
        failed = [name for name, passed in results if not passed]
        line = f"criterion {n} ({desc}): {'PASS' if ok else 'FAIL'}"
        if failed:
            line += " [failed: " + ", ".join(failed) + "]"
        tr.write_line(line)
