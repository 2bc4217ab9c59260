"""Shared fixtures and the acceptance-criteria report hook."""

from __future__ import annotations

import numpy as np
import pytest

from fkslab import Grid, PhysicalField, SpectralField, to_spectral

# Collected by tests/test_acceptance.py; printed as a terminal section so
# the verdict for every criterion is visible even when capture is on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


def random_physical(grid: Grid, rng: np.random.Generator, scale: float = 1.0) -> PhysicalField:
    """Random real field on the collocation grid."""
    return PhysicalField(grid, scale * rng.standard_normal(grid.n))


def random_band_field(
    grid: Grid,
    rng: np.random.Generator,
    max_mode: int | None = None,
    decay: float = 2.0,
    mean_zero: bool = True,
) -> SpectralField:
    """Random Hermitian band-limited field with |xi|^(-decay) magnitudes."""
    top = max_mode if max_mode is not None else grid.dealias_cutoff
    top = min(top, grid.dealias_cutoff)
    values = np.zeros(grid.n)
    x = grid.nodes
    for xi in range(1, top + 1):
        amp = float(xi) ** -decay
        values += amp * (
            rng.standard_normal() * np.cos(xi * x)
            + rng.standard_normal() * np.sin(xi * x)
        )
    if not mean_zero:
        values += rng.standard_normal()
    return to_spectral(PhysicalField(grid, values))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
