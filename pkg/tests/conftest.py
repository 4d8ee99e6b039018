"""Shared fixtures: cached preset solves so slow setups run once per session."""

from __future__ import annotations

import math

import numpy as np
import pytest

from vortexfilm.geometry import build_grid, effective_field, thickness_field
from vortexfilm.obstacle import assemble, solve
from vortexfilm.presets import get_preset


def optimal_relax(resolution: int) -> float:
    return 2.0 / (1.0 + math.sin(math.pi / resolution))


def solve_preset(name: str, H: float, resolution: int, tol: float = 1e-10):
    """(grid, a, eff, sol) for a preset at field magnitude H."""
    preset = get_preset(name)
    grid = build_grid(preset.domain, resolution)
    a = thickness_field(preset.film, grid)
    eff = effective_field(preset.film, preset.direction.scaled(H), grid)
    problem = assemble(grid, a, eff.F)
    sol = solve(problem, tol=tol, relax=optimal_relax(resolution))
    return grid, a, eff, sol


@pytest.fixture(scope="session")
def ex1_H6():
    """Example-1 solve above critical (both coincidence sets nonempty)."""
    return solve_preset("example1", 6.0, 128)


@pytest.fixture(scope="session")
def ex2_H12():
    """Example-2 solve in the annular-plateau regime."""
    return solve_preset("example2", 12.0, 128)


@pytest.fixture(scope="session")
def flat_green():
    """Unit disk, a = 1: grid, problem and Green operator."""
    from vortexfilm.recovery import GreenOperator
    from vortexfilm.geometry import DomainSpec

    grid = build_grid(DomainSpec.unit_disk(), 96)
    a = np.ones((grid.nx, grid.ny))
    problem = assemble(grid, a, np.zeros_like(a))
    return grid, a, problem, GreenOperator.from_problem(problem)
