import numpy as np
import pytest

from pfc_lab.ising import PfcParams, build_pfc


@pytest.fixture
def pfc2():
    return build_pfc(PfcParams(2, 1.0, 0.09))


@pytest.fixture
def pfc3():
    return build_pfc(PfcParams(3, 1.0, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance verdicts are collected here and printed in the terminal summary,
# so they show up in the normal (captured) pytest output.
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def verdict():
    def record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
