"""Shared pytest wiring: a per-criterion verdict block for the acceptance file.

Acceptance tests tag themselves via record_property("criterion", (n, text));
this hook turns those tags into one PASS/FAIL line each at the end of the run.
"""

from __future__ import annotations


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows: dict[int, tuple[str, str]] = {}
    for outcome, flag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(report, "user_properties", []) or [])
            if "criterion" not in props:
                continue
            number, text = props["criterion"]
            if flag == "FAIL" or number not in rows:
                rows[number] = (flag, text)
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(rows):
        flag, text = rows[number]
        terminalreporter.write_line(f"criterion {number:02d} {flag}: {text}")
