"""Film footprint, thickness profile, and the effective field on the midsurface.

The film is a thin shell over a bounded planar region omega: lower surface
``f``, upper surface ``g``, thickness ``a = g - f > 0``.  An applied magnetic
field ``(H1, H2, H3)`` (normalised so the large logarithm is already divided
out) induces a perpendicular forcing

    F(x) = H3 - (H1, H2) . grad((f + g)/2)(x)

on the midsurface, together with a planar vector potential

    B(x) = (-H3 x2 / 2, H3 x1 / 2) + ((f + g)/2)(x) * (H2, -H1)

whose discrete curl reproduces F.  Everything downstream (obstacle problem,
Hodge splitting, recovery construction) consumes the uniform cell-centred
grids produced here.

Conventions used across the package:

* scalar fields are ``(nx, ny)`` float arrays indexed ``[i, j]`` with cell
  centre ``(x0 + (i + 1/2) h, y0 + (j + 1/2) h)``;
* the perp-gradient is always ``grad_perp u = (-d2 u, d1 u)``;
* fields are evaluated on the full bounding box (presets are polynomial), and
  the ``inside`` mask selects the cells that participate in sums/solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

__all__ = [
    "DomainSpec",
    "Grid2D",
    "FilmGeometry",
    "AppliedField",
    "EffectiveFieldData",
    "build_grid",
    "thickness_field",
    "effective_field",
    "vector_potential_check",
]

# Directions used for cut-cell boundary distances: +x, -x, +y, -y.
_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))

# Cut faces closer than this fraction of h to the wall are clamped so the
# boundary weight 1/theta stays finite.  The clamp must be far below h, not a
# fixed fraction: clamping a sliver at distance d to theta_min h moves the
# wall by (theta_min h - d), and anything of order h * theta_min shows up as
# a first-order boundary error.  At 1e-6 the misplacement is invisible next
# to the h^2 discretisation error while diag entries stay <= 1e6 / a.
_THETA_MIN = 1e-6


@dataclass(frozen=True)
class DomainSpec:
    """Shape of the film footprint omega.

    kind is one of "disk", "rectangle", "annulus", "mask".  Use the
    constructors (`unit_disk`, `rectangle`, `annulus`, `from_mask`) rather
    than building instances by hand.
    """

    kind: str
    params: tuple = ()
    path: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "annulus":
            r_in, r_out = self.params
            if not 0.0 < r_in < r_out:
                raise ValueError(
                    f"annulus needs 0 < r_inner < r_outer, got ({r_in}, {r_out})"
                )
        elif self.kind == "rectangle":
            x0, x1, y0, y1 = self.params
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"degenerate rectangle {self.params}")
        elif self.kind == "disk":
            (r,) = self.params
            if not r > 0.0:
                raise ValueError(f"disk radius must be positive, got {r}")
        elif self.kind != "mask":
            raise ValueError(f"unknown domain kind {self.kind!r}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def unit_disk() -> "DomainSpec":
        return DomainSpec("disk", (1.0,))

    @staticmethod
    def disk(radius: float) -> "DomainSpec":
        return DomainSpec("disk", (float(radius),))

    @staticmethod
    def rectangle(x0: float, x1: float, y0: float, y1: float) -> "DomainSpec":
        return DomainSpec("rectangle", (float(x0), float(x1), float(y0), float(y1)))

    @staticmethod
    def annulus(r_inner: float, r_outer: float) -> "DomainSpec":
        return DomainSpec("annulus", (float(r_inner), float(r_outer)))

    @staticmethod
    def from_mask(path: str) -> "DomainSpec":
        return DomainSpec("mask", (), str(path))

    # -- geometry queries --------------------------------------------------

    def bounding_box(self) -> tuple[float, float, float, float]:
        if self.kind == "disk":
            (r,) = self.params
            return (-r, r, -r, r)
        if self.kind == "annulus":
            r = self.params[1]
            return (-r, r, -r, r)
        if self.kind == "rectangle":
            return self.params  # type: ignore[return-value]
        raise ValueError("mask domains carry their own grid; no analytic bbox")

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Strict interior test, vectorised."""
        if self.kind == "disk":
            (r,) = self.params
            return x * x + y * y < r * r
        if self.kind == "annulus":
            r_in, r_out = self.params
            rr = x * x + y * y
            return (rr > r_in * r_in) & (rr < r_out * r_out)
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.params
            return (x > x0) & (x < x1) & (y > y0) & (y < y1)
        raise ValueError("mask domains have no analytic membership test")

    def crossing(self, x: float, y: float, dx: int, dy: int) -> float | None:
        """Distance from the inside point (x, y) to the wall along (dx, dy).

        Only the four axis directions are supported.  Returns None when no
        analytic boundary is available (mask domains).
        """
        if self.kind == "mask":
            return None
        # rotate so the march is along +x
        if dy != 0:
            x, y = y, x
            s = dy
        else:
            s = dx
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.params
            if dy != 0:
                x0, x1, y0, y1 = y0, y1, x0, x1
            return (x1 - x) if s > 0 else (x - x0)
        if self.kind == "disk":
            (r,) = self.params
            return -s * x + math.sqrt(max(r * r - y * y, 0.0))
        # annulus: nearest positive hit on either circle
        r_in, r_out = self.params
        best = -s * x + math.sqrt(max(r_out * r_out - y * y, 0.0))
        disc = r_in * r_in - y * y
        if disc > 0.0:
            root = math.sqrt(disc)
            for t in (-s * x - root, -s * x + root):
                if 0.0 < t < best:
                    best = t
        return best


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Masked uniform cell-centred grid over the footprint's bounding box.

    bdry_theta[d, i, j] is the fraction of h between the inside cell (i, j)
    and the wall in direction d (order +x, -x, +y, -y); 1.0 when the
    neighbour is inside or when no analytic wall is known (staircase).
    """

    nx: int
    ny: int
    h: float
    x0: float
    y0: float
    inside: np.ndarray
    bdry_theta: np.ndarray

    def __post_init__(self) -> None:
        if self.h <= 0.0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.inside.any():
            raise ValueError("grid has no inside cells")

    @cached_property
    def xs(self) -> np.ndarray:
        return self.x0 + (np.arange(self.nx) + 0.5) * self.h

    @cached_property
    def ys(self) -> np.ndarray:
        return self.y0 + (np.arange(self.ny) + 0.5) * self.h

    @cached_property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.xs[:, None], (self.nx, self.ny)).copy()

    @cached_property
    def Y(self) -> np.ndarray:
        return np.broadcast_to(self.ys[None, :], (self.nx, self.ny)).copy()

    @cached_property
    def boundary_band(self) -> np.ndarray:
        """Inside cells with at least one outside 4-neighbour."""
        pad = np.pad(self.inside, 1, constant_values=False)
        nb_all_in = (
            pad[2:, 1:-1] & pad[:-2, 1:-1] & pad[1:-1, 2:] & pad[1:-1, :-2]
        )
        return self.inside & ~nb_all_in

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.x0 + (i + 0.5) * self.h, self.y0 + (j + 0.5) * self.h)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Cell whose square contains (x, y), clipped to the box."""
        i = min(max(int((x - self.x0) / self.h), 0), self.nx - 1)
        j = min(max(int((y - self.y0) / self.h), 0), self.ny - 1)
        return i, j

    def interp(self, fld: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of a cell-centred field (0 outside the box)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = (x - self.x0) / self.h - 0.5
        gy = (y - self.y0) / self.h - 0.5
        i0 = np.floor(gx).astype(int)
        j0 = np.floor(gy).astype(int)
        tx = gx - i0
        ty = gy - j0
        out = np.zeros(np.broadcast(x, y).shape, dtype=float)
        padded = np.zeros((self.nx + 2, self.ny + 2))
        padded[1:-1, 1:-1] = fld
        i0c = np.clip(i0 + 1, 0, self.nx)
        j0c = np.clip(j0 + 1, 0, self.ny)
        i1c = np.clip(i0 + 2, 0, self.nx + 1)
        j1c = np.clip(j0 + 2, 0, self.ny + 1)
        out = (
            padded[i0c, j0c] * (1 - tx) * (1 - ty)
            + padded[i1c, j0c] * tx * (1 - ty)
            + padded[i0c, j1c] * (1 - tx) * ty
            + padded[i1c, j1c] * tx * ty
        )
        return out


def build_grid(spec: DomainSpec, resolution: int) -> Grid2D:
    """Uniform grid whose longer bounding-box side spans `resolution` cells.

    For mask-file specs the stored grid is loaded as-is and `resolution` is
    ignored (the file fixes nx, ny, h).
    """
    if spec.kind == "mask":
        from . import io as _io

        return _io.read_mask(spec.path)
    resolution = int(resolution)
    if resolution < 8:
        raise ValueError(f"resolution must be >= 8, got {resolution}")
    bx0, bx1, by0, by1 = spec.bounding_box()
    span = max(bx1 - bx0, by1 - by0)
    h = span / resolution
    nx = max(int(round((bx1 - bx0) / h)), 1)
    ny = max(int(round((by1 - by0) / h)), 1)
    xs = bx0 + (np.arange(nx) + 0.5) * h
    ys = by0 + (np.arange(ny) + 0.5) * h
    inside = spec.contains(xs[:, None], ys[None, :])
    if not inside.any():
        raise ValueError(f"domain {spec.kind} too small for resolution {resolution}")
    theta = np.ones((4, nx, ny))
    # cut-cell wall distances on the boundary band (analytic domains only)
    pad = np.pad(inside, 1, constant_values=False)
    nbrs = [pad[2:, 1:-1], pad[:-2, 1:-1], pad[1:-1, 2:], pad[1:-1, :-2]]
    for d, (dx, dy) in enumerate(_DIRS):
        cut = inside & ~nbrs[d]
        for i, j in np.argwhere(cut):
            t = spec.crossing(xs[i], ys[j], dx, dy)
            if t is not None:
                theta[d, i, j] = min(max(t / h, _THETA_MIN), 1.0)
    return Grid2D(nx=nx, ny=ny, h=h, x0=bx0, y0=by0, inside=inside,
                  bdry_theta=theta)


@dataclass(frozen=True)
class FilmGeometry:
    """Lower/upper film surfaces and (optionally) the exact midsurface slope.

    f and g map coordinate arrays (X, Y) to surface heights.  mid_grad, when
    given, returns the analytic gradient of (f + g)/2 — presets provide it so
    the effective field carries no differencing error.
    """

    name: str
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mid_grad: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None

    @staticmethod
    def example1() -> "FilmGeometry":
        """Paraboloid-of-revolution midsurface, unit thickness."""
        return FilmGeometry(
            name="example1",
            f=lambda x, y: x * x + y * y - 0.5,
            g=lambda x, y: x * x + y * y + 0.5,
            mid_grad=lambda x, y: (2.0 * x, 2.0 * y),
        )

    @staticmethod
    def example2() -> "FilmGeometry":
        """Cubic saddle midsurface -x2(1 - 4x1^2 - (4/3)x2^2), unit thickness."""

        def mid(x, y):
            return -y * (1.0 - 4.0 * x * x - (4.0 / 3.0) * y * y)

        return FilmGeometry(
            name="example2",
            f=lambda x, y: mid(x, y) - 0.5,
            g=lambda x, y: mid(x, y) + 0.5,
            mid_grad=lambda x, y: (
                8.0 * x * y,
                -1.0 + 4.0 * x * x + 4.0 * y * y,
            ),
        )

    @staticmethod
    def flat(thickness: float = 1.0, offset: float = 0.0) -> "FilmGeometry":
        t = float(thickness)
        c = float(offset)
        if t <= 0.0:
            raise ValueError(f"thickness must be positive, got {t}")
        return FilmGeometry(
            name="flat",
            f=lambda x, y: np.full_like(np.asarray(x, dtype=float), c - t / 2),
            g=lambda x, y: np.full_like(np.asarray(x, dtype=float), c + t / 2),
            mid_grad=lambda x, y: (np.zeros_like(x), np.zeros_like(y)),
        )

    @staticmethod
    def by_name(name: str) -> "FilmGeometry":
        try:
            return {
                "example1": FilmGeometry.example1,
                "example2": FilmGeometry.example2,
                "flat": FilmGeometry.flat,
            }[name]()
        except KeyError:
            raise ValueError(f"unknown film preset {name!r}") from None


@dataclass(frozen=True)
class AppliedField:
    """Normalised applied field (H1, H2) horizontal, H3 perpendicular."""

    H1: float = 0.0
    H2: float = 0.0
    H3: float = 0.0

    def __post_init__(self) -> None:
        for name in ("H1", "H2", "H3"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)

    def scaled(self, s: float) -> "AppliedField":
        return AppliedField(self.H1 * s, self.H2 * s, self.H3 * s)


@dataclass(frozen=True, eq=False)
class EffectiveFieldData:
    """Perpendicular forcing F and planar potential B = (Bx, By) on a grid."""

    F: np.ndarray
    Bx: np.ndarray
    By: np.ndarray
    grid: Grid2D


def thickness_field(film: FilmGeometry, grid: Grid2D) -> np.ndarray:
    """Thickness a = g - f at every cell centre; must be positive inside."""
    a = np.asarray(film.g(grid.X, grid.Y) - film.f(grid.X, grid.Y), dtype=float)
    bad = (a <= 0.0) & grid.inside
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        x, y = grid.cell_center(i, j)
        raise ValueError(
            f"nonpositive thickness a={a[i, j]:.6g} at cell ({i}, {j}), "
            f"centre ({x:.4f}, {y:.4f})"
        )
    return a


def _midsurface(film: FilmGeometry, grid: Grid2D) -> np.ndarray:
    return 0.5 * np.asarray(
        film.f(grid.X, grid.Y) + film.g(grid.X, grid.Y), dtype=float
    )


def effective_field(
    film: FilmGeometry, applied: AppliedField, grid: Grid2D
) -> EffectiveFieldData:
    """F = H3 - (H1,H2).grad((f+g)/2) and a potential B with curl B = F.

    B combines the rotationally symmetric part for the perpendicular
    component with the midsurface term for the in-plane components:
    B = (-H3 x2/2, H3 x1/2) + ((f+g)/2)(H2, -H1).
    """
    mid = _midsurface(film, grid)
    if film.mid_grad is not None:
        gx, gy = film.mid_grad(grid.X, grid.Y)
    else:
        # sampled surfaces: centred differences, one-sided at the box edge
        gx, gy = np.gradient(mid, grid.h, edge_order=2)
    F = applied.H3 - (applied.H1 * gx + applied.H2 * gy)
    Bx = -0.5 * applied.H3 * grid.Y + mid * applied.H2
    By = 0.5 * applied.H3 * grid.X - mid * applied.H1
    return EffectiveFieldData(F=np.asarray(F, dtype=float), Bx=Bx, By=By, grid=grid)


def curl_centered(vx: np.ndarray, vy: np.ndarray, h: float) -> np.ndarray:
    """d1 vy - d2 vx by centred differences (zero beyond the box edge)."""
    c = np.zeros_like(vx)
    c[1:-1, :] += (vy[2:, :] - vy[:-2, :]) / (2.0 * h)
    c[0, :] += vy[1, :] / (2.0 * h)
    c[-1, :] += -vy[-2, :] / (2.0 * h)
    c[:, 1:-1] -= (vx[:, 2:] - vx[:, :-2]) / (2.0 * h)
    c[:, 0] -= vx[:, 1] / (2.0 * h)
    c[:, -1] -= -vx[:, -2] / (2.0 * h)
    return c


def vector_potential_check(data: EffectiveFieldData, grid: Grid2D) -> float:
    """Max |discrete_curl(B) - F| over cells whose 4 neighbours are inside."""
    curl = curl_centered(data.Bx, data.By, grid.h)
    deep = grid.inside & ~grid.boundary_band
    if not deep.any():
        return float("nan")
    return float(np.max(np.abs(curl - data.F)[deep]))
