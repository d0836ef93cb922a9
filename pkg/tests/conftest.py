"""Shared fixtures plus the acceptance summary.

The terminal summary prints one PASSED/FAILED line per acceptance
test so the gate can be read off the bottom of any pytest run without
grepping the dots.
"""

import time

import pytest


def pytest_sessionstart(session):
    session.config._suite_started = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(report, "nodeid", ""):
                continue
            name = report.nodeid.split("::")[-1]
            verdict = "PASSED" if outcome == "passed" else "FAILED"
            lines.append((name, verdict))
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, verdict in sorted(lines):
        terminalreporter.write_line(f"[ACCEPTANCE] {name}: {verdict}")
    elapsed = time.perf_counter() - getattr(config, "_suite_started", time.perf_counter())
    budget = "within" if elapsed < 60.0 else "OVER"
    terminalreporter.write_line(
        f"[ACCEPTANCE] suite wall time: {elapsed:.1f}s ({budget} the 60s budget)"
    )
