import time
from contextlib import contextmanager

import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion():
    """Context manager that times an acceptance block and records one PASS/FAIL line."""

    @contextmanager
    def run(number, title, budget_s):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            line = f"[acceptance {number:>2}] FAIL  {title} ({time.perf_counter() - start:.1f}s): {exc}"
            ACCEPTANCE_LINES.append(line.splitlines()[0])
            print(ACCEPTANCE_LINES[-1])
            raise
        elapsed = time.perf_counter() - start
        ok = elapsed < budget_s
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"[acceptance {number:>2}] {verdict}  {title} ({elapsed:.1f}s, budget {budget_s:g}s)")
        print(ACCEPTANCE_LINES[-1])
        if not ok:
            pytest.fail(f"runtime {elapsed:.1f}s exceeds the {budget_s:g}s budget")

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
