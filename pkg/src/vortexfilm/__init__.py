"""Mean-field vortex densities in thin superconducting films.

The package solves the weighted bilateral obstacle problem that governs the
limiting vortex density of a variable-thickness film, decomposes planar
fields into gradient / rotational / harmonic parts on the film footprint,
and rebuilds finite-kappa order parameters from the limit data to compare
energies across scales.
"""

from __future__ import annotations

from .geometry import (
    AppliedField,
    DomainSpec,
    FilmGeometry,
    Grid2D,
    build_grid,
    effective_field,
    thickness_field,
)
from .obstacle import (
    ConvergenceError,
    CurrentField,
    MeasureField,
    ObstacleProblem,
    ObstacleSolution,
    assemble,
    critical_field,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AppliedField",
    "DomainSpec",
    "FilmGeometry",
    "Grid2D",
    "build_grid",
    "effective_field",
    "thickness_field",
    "ConvergenceError",
    "CurrentField",
    "MeasureField",
    "ObstacleProblem",
    "ObstacleSolution",
    "assemble",
    "critical_field",
    "solve",
    "__version__",
]
