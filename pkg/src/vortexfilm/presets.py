"""Canonical problem bundles: footprint + film + applied-field direction.

Each preset fixes the *direction* of the applied field; runs scale it by a
single magnitude H.  The directions are chosen so that the forcing the solver
sees matches the closed-form reference solutions used by the oracles:

* ``example1``: paraboloid film on the unit disk, direction (-1, 0, 0), so
  F = +2 H x1.  The subcritical solution is then u = 2H * (1/8) x1 (1 - r^2)
  — positive on the right half-disk — and the upper coincidence set first
  appears near (+1/sqrt(3), 0).  (The opposite orientation just negates u and
  swaps the two coincidence sets; that exact symmetry is tested.)
* ``example2``: cubic-saddle film on the unit disk, direction (0, -1, 0), so
  F = (4 r^2 - 1) H: vortices favour the outer annulus r > 1/2, antivortices
  the centre.
* ``flat``: flat unit-thickness film on the unit disk, perpendicular unit
  field, F = H.
"""

from __future__ import annotations

from dataclasses import dataclass

from .geometry import AppliedField, DomainSpec, FilmGeometry

__all__ = ["ProblemPreset", "get_preset", "PRESET_NAMES"]


@dataclass(frozen=True)
class ProblemPreset:
    name: str
    domain: DomainSpec
    film: FilmGeometry
    direction: AppliedField  # unit-scale applied direction


def get_preset(name: str) -> ProblemPreset:
    if name == "example1":
        return ProblemPreset(
            name,
            DomainSpec.unit_disk(),
            FilmGeometry.example1(),
            AppliedField(-1.0, 0.0, 0.0),
        )
    if name == "example2":
        return ProblemPreset(
            name,
            DomainSpec.unit_disk(),
            FilmGeometry.example2(),
            AppliedField(0.0, -1.0, 0.0),
        )
    if name == "flat":
        return ProblemPreset(
            name,
            DomainSpec.unit_disk(),
            FilmGeometry.flat(),
            AppliedField(0.0, 0.0, 1.0),
        )
    raise ValueError(f"unknown preset {name!r}")


PRESET_NAMES = ("example1", "example2", "flat")
