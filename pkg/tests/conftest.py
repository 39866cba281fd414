import numpy as np
import pytest

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Store (and print) one acceptance line; several checks may feed one criterion."""
    prev = ACCEPTANCE_LINES.get(number)
    if prev is not None:
        passed = passed and prev[0]
        detail = prev[1] + "; " + detail
    ACCEPTANCE_LINES[number] = (passed, detail)
    print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        passed, detail = ACCEPTANCE_LINES[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
