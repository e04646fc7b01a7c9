import math

import numpy as np
import pytest

from kreinsolve.kernels import KernelSpec, catalog

ACCEPTANCE_LINES: list[str] = []


def observed_orders(hs, errs):
    return [math.log(e0 / e1) / math.log(h0 / h1) for h0, h1, e0, e1 in zip(hs, hs[1:], errs, errs[1:])]


def smooth_block(t, s):
    return 0.3 * np.array([[np.exp(-((t - s) ** 2)), t * s], [np.sin(t + s), np.cos(t * s)]])


def complex_block(t, s):
    return (0.2 + 0.3j) * np.array([[np.exp(t - s), 1j * t], [s, np.cos(t + 2 * s)]])


SMOOTH_2X2 = KernelSpec("general", 2, smooth_block, name="smooth_2x2")
COMPLEX_2X2 = KernelSpec("general", 2, complex_block, name="complex_2x2")
ANTIDIAG = catalog("antidiag_block", h1=lambda u: 0.5 * np.cos(u), h2=lambda u: 0.3 * np.exp(-u * u))


@pytest.fixture
def acceptance():
    def record(criterion: str, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
