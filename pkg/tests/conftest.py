from __future__ import annotations

import numpy as np
import pytest

from pshape.grid import box_mask, build_grid

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit_interval():
    return build_grid([(0.0, 1.0)], 257)


@pytest.fixture
def unit_square():
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], 33)
    return g, box_mask(g)


def torsion_1d(x: np.ndarray, p: float) -> np.ndarray:
    a = p / (p - 1)
    return (p - 1) / p * (0.5**a - np.abs(x - 0.5) ** a)
