"""Shared builders for the test suite."""

from __future__ import annotations

import math

import numpy as np
import pytest

from nlms import CellSet, CylinderDomain, ExteriorGraphData, GridDescriptor, Kernel, Problem

ACCEPTANCE_LINES: list[str] = []


def record(number: int, title: str, passed: bool, detail: str, seconds: float) -> str:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail} [{seconds:.1f} s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def halfspace(g: GridDescriptor, row: int | None = None) -> CellSet:
    """Rows below ``row`` (default: the middle) on every column, closure included."""
    row = g.ny // 2 if row is None else row
    return CellSet.subgraph(g, np.full(g.nx, float(row)))


def noisy_halfspace(rng, g: GridDescriptor, band: int = 6, p: float = 0.3,
                    side: int = 4) -> CellSet:
    """Half-space with random flips in a horizontal band, away from the side edges."""
    base = halfspace(g)
    bits = np.array(base.bits)
    mid = g.ny // 2
    noise = rng.random((2 * band, g.nx - 2 * side)) < p
    bits[mid - band:mid + band, side:g.nx - side] ^= noise
    return base.with_bits(bits)


def random_blob(rng, g: GridDescriptor, margin: int = 4, p: float = 0.5) -> CellSet:
    """Random bits in the window core; nothing outside the window."""
    bits = np.zeros(g.shape, bool)
    bits[margin:g.ny - margin, margin:g.nx - margin] = \
        rng.random((g.ny - 2 * margin, g.nx - 2 * margin)) < p
    inf = -math.inf
    return CellSet(g, bits, np.full(g.nx, inf), inf, inf, np.zeros(g.nx, bool))


def jump_problem(h, nx, ny, left, right, s=0.25, omega=(-1.0, 1.0)) -> Problem:
    g = GridDescriptor(h, nx, ny)
    x = g.col_centers()
    u = np.where(x < 0, left, right).astype(float)
    return Problem(g, CylinderDomain((omega,)), ExteriorGraphData(u), Kernel(2, s))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
