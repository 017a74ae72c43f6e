from __future__ import annotations

import os
import sys
import time

sys.path.insert(0, os.path.dirname(__file__))

SUITE_LIMIT = 30 * 60.0
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
_T0 = time.perf_counter()


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}", flush=True)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _T0
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            ok, detail = ACCEPTANCE[k]
            terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    terminalreporter.write_line(
        f"suite runtime {elapsed:.0f} s: {'PASS' if elapsed < SUITE_LIMIT else 'FAIL'} (limit {SUITE_LIMIT:.0f} s)"
    )


def pytest_sessionfinish(session, exitstatus):
    if time.perf_counter() - _T0 >= SUITE_LIMIT and exitstatus == 0:
        session.exitstatus = 1
