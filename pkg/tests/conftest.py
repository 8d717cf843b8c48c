import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from vslocreg.kernels import parse_kernel  # noqa: E402
from vslocreg.scenario import builtin_scenario  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def report(criterion: str, label: str, ok: bool, detail: str) -> bool:
    """Record one acceptance cell; the lines are printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  [{criterion}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    fails = sum(line.startswith("FAIL") for line in ACCEPTANCE_LINES)
    terminalreporter.write_line(f"{len(ACCEPTANCE_LINES) - fails} passed, {fails} failed acceptance cells")


@pytest.fixture(scope="session")
def gauss():
    return parse_kernel("gaussian")


@pytest.fixture(scope="session")
def scen1():
    return builtin_scenario(1)


@pytest.fixture(scope="session")
def scenarios():
    return {k: builtin_scenario(k) for k in (1, 2, 3)}
