"""Weighted Hodge splitting of in-plane current fields.

A field Z on the film splits as Z = U + V + W, orthogonally in the
thickness-weighted inner product <u, v> = sum a u.v h^2:

* U = -(1/a) grad_perp psi carries the vorticity (psi pinned to zero at the
  wall),
* V = grad zeta carries sources, with a Neumann-type potential zeta,
* W is the leftover; on a footprint with holes it contains the m
  circulation generators produced by `harmonic_basis`.

Both projections use one shared pair of centred differences D1, D2 on the
bounding box padded by one cell ring.  Because D1 and D2 are built as
Kronecker products they commute exactly, and perp-gradients of wall-pinned
stream functions are orthogonal to gradients in exact arithmetic -- not
merely to discretisation order -- so reconstruction, pairwise orthogonality
and the Pythagoras identity all hold to linear-solver roundoff.  The halo
ring matters: the footprint may touch the bounding box (a disk touches it
at four points), and without the ring the zero extension would silently
pin the Neumann potential there, skewing the projection.  The price of
centred differences is parity decoupling: the Neumann solve for zeta
carries four independent constants (one per (i mod 2, j mod 2) class),
pinned here by four mean constraints in a KKT block where a compact
stencil would need a single mean-zero shift.

`harmonic_basis` instead reuses the compact 5-point operator of the
obstacle solver, augmented with one unknown per hole: each basis field
xi_i is discretely a-harmonic, constant on every hole wall, zero on the
outer wall, and normalised so that the counterclockwise circulation of
(1/a) grad_perp xi_i around hole j is 2 pi delta_ij.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndimage
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geometry import Grid2D
from .obstacle import _DIRS, _shifted, grad_centered, CurrentField

__all__ = [
    "HodgeSplit",
    "HodgeOperator",
    "HarmonicBasis",
    "decompose",
    "harmonic_basis",
    "hole_components",
    "weighted_inner",
]


def weighted_inner(u: CurrentField, v: CurrentField, a: np.ndarray) -> float:
    """<u, v> = sum_inside a (ux vx + uy vy) h^2."""
    grid = u.grid
    dot = u.jx * v.jx + u.jy * v.jy
    return float(np.sum((a * dot)[grid.inside]) * grid.cell_area)


@dataclass(frozen=True, eq=False)
class HodgeSplit:
    U: CurrentField
    V: CurrentField
    W: CurrentField
    psi: np.ndarray
    zeta_pot: np.ndarray
    neumann_defect: float

    @property
    def grid(self) -> Grid2D:
        return self.U.grid

    def reconstruction(self) -> CurrentField:
        g = self.grid
        return CurrentField(
            jx=self.U.jx + self.V.jx + self.W.jx,
            jy=self.U.jy + self.V.jy + self.W.jy,
            grid=g,
        )


def _shift_ops(nx: int, ny: int, h: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Centred differences D1 (x) and D2 (y) on an nx-by-ny box.

    Built from Kronecker shift products so that (D1 u)[i,j] =
    (u[i+1,j] - u[i-1,j]) / 2h with zero extension past the box edge, and
    D1 @ D2 == D2 @ D1 exactly.
    """
    ex = sp.eye(nx, format="csr", k=1)
    ey = sp.eye(ny, format="csr", k=1)
    ix = sp.eye(nx, format="csr")
    iy = sp.eye(ny, format="csr")
    sx = sp.kron(ex, iy, format="csr")
    sy = sp.kron(ix, ey, format="csr")
    d1 = (sx - sx.T) / (2.0 * h)
    d2 = (sy - sy.T) / (2.0 * h)
    return d1.tocsr(), d2.tocsr()


class HodgeOperator:
    """Factorised projections for one (grid, thickness) pair.

    Decomposing many fields on the same footprint reuses the two LU
    factorisations; the one-shot module function `decompose` wraps this.
    """

    def __init__(self, grid: Grid2D, a: np.ndarray):
        if a.shape != grid.inside.shape:
            raise ValueError(
                f"thickness shape {a.shape} does not match grid "
                f"({grid.nx}, {grid.ny})"
            )
        if not (a[grid.inside] > 0.0).all():
            raise ValueError("thickness must be positive on inside cells")
        self.grid = grid
        self.a = a
        # one-cell halo so the footprint never touches the operator box edge
        inside = np.pad(grid.inside, 1, constant_values=False)
        self._shape = inside.shape
        ap = np.pad(np.where(grid.inside, a, 1.0), 1, constant_values=1.0)
        self._d1, self._d2 = _shift_ops(*self._shape, grid.h)

        # stream-function DOFs: inside cells whose whole stencil stays inside,
        # so every centred difference of psi lives on inside cells
        band = np.pad(grid.boundary_band, 1, constant_values=False)
        idx_u = np.flatnonzero((inside & ~band).ravel())
        mu = sp.diags(np.where(inside, 1.0 / ap, 0.0).ravel())
        a_u = self._d1.T @ mu @ self._d1 + self._d2.T @ mu @ self._d2
        self._idx_u = idx_u
        self._lu_u = splu(a_u[idx_u][:, idx_u].tocsc())

        # potential DOFs: inside cells plus every cell a centred difference
        # at an inside cell can reach, so grid-sampled gradients of smooth
        # potentials are representable exactly
        plus = ndimage.binary_dilation(
            inside, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)
        )
        idx_v = np.flatnonzero(plus.ravel())
        self._idx_v = idx_v
        ma = sp.diags(np.where(inside, ap, 0.0).ravel())
        a_v = (self._d1.T @ ma @ self._d1 + self._d2.T @ ma @ self._d2)[idx_v][:, idx_v]

        # centred differences never couple the four (i, j) parity classes,
        # so the Neumann null space is one constant per class: pin each by a
        # mean constraint in a symmetric KKT block
        ii, jj = np.unravel_index(idx_v, self._shape)
        classes = (ii % 2) * 2 + (jj % 2)
        rows, cols, vals = [], [], []
        n_con = 0
        for c in range(4):
            members = np.flatnonzero(classes == c)
            if members.size == 0:
                continue
            rows.extend([n_con] * members.size)
            cols.extend(members.tolist())
            vals.extend([1.0 / members.size] * members.size)
            n_con += 1
        con = sp.csr_matrix(
            (vals, (rows, cols)), shape=(n_con, idx_v.size)
        )
        kkt = sp.bmat([[a_v, con.T], [con, None]], format="csc")
        self._n_con = n_con
        self._lu_v = splu(kkt)
        self._inside_p = inside
        self._inv_a_p = np.where(inside, 1.0 / ap, 0.0).ravel()
        self._a_p = np.where(inside, ap, 0.0).ravel()

    def decompose(self, Z: CurrentField) -> HodgeSplit:
        grid = self.grid
        inside = grid.inside
        if not (
            np.isfinite(Z.jx[inside]).all() and np.isfinite(Z.jy[inside]).all()
        ):
            raise ValueError("input field is not finite on inside cells")
        zx = np.pad(np.where(inside, Z.jx, 0.0), 1).ravel()
        zy = np.pad(np.where(inside, Z.jy, 0.0), 1).ravel()
        d1, d2 = self._d1, self._d2

        b_u = (d2.T @ zx - d1.T @ zy)[self._idx_u]
        psi = np.zeros(zx.size)
        psi[self._idx_u] = self._lu_u.solve(b_u)
        ux = self._inv_a_p * (d2 @ psi)
        uy = -self._inv_a_p * (d1 @ psi)

        af = self._a_p
        b_v = (d1.T @ (af * zx) + d2.T @ (af * zy))[self._idx_v]
        rhs = np.concatenate([b_v, np.zeros(self._n_con)])
        sol = self._lu_v.solve(rhs)
        zeta = np.zeros(zx.size)
        zeta[self._idx_v] = sol[: b_v.size]
        # compatibility defect: the multipliers are the class-sum components
        # of b_v, which vanish identically for masked data
        scale = float(np.linalg.norm(b_v)) or 1.0
        defect = float(np.abs(sol[b_v.size:]).max(initial=0.0)) / scale
        mask = self._inside_p.ravel()
        vx = np.where(mask, d1 @ zeta, 0.0)
        vy = np.where(mask, d2 @ zeta, 0.0)

        def unpad(flat: np.ndarray) -> np.ndarray:
            return flat.reshape(self._shape)[1:-1, 1:-1]

        U = CurrentField(unpad(ux), unpad(uy), grid)
        V = CurrentField(unpad(vx), unpad(vy), grid)
        W = CurrentField(
            np.where(inside, Z.jx - U.jx - V.jx, 0.0),
            np.where(inside, Z.jy - U.jy - V.jy, 0.0),
            grid,
        )
        return HodgeSplit(
            U=U, V=V, W=W,
            psi=unpad(psi).copy(),
            zeta_pot=unpad(zeta).copy(),
            neumann_defect=defect,
        )


def decompose(Z: CurrentField, a: np.ndarray, grid: Grid2D | None = None) -> HodgeSplit:
    """One-shot orthogonal split Z = U + V + W (see module docstring)."""
    if grid is not None and grid is not Z.grid:
        raise ValueError("grid argument does not match the field's grid")
    return HodgeOperator(Z.grid, a).decompose(Z)


# ---------------------------------------------------------------------------
# harmonic generators for multiply connected footprints


def hole_components(grid: Grid2D) -> tuple[np.ndarray, int]:
    """Label the holes of the footprint.

    Returns (labels, m): labels[i, j] in {0..m-1} on cells belonging to a
    hole, -1 on inside cells and on the unbounded outer region (any outside
    component touching the bounding-box border).
    """
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)
    raw, n = ndimage.label(~grid.inside, structure=structure)
    labels = np.full(grid.inside.shape, -1, dtype=np.int32)
    border = set(np.unique(raw[0, :])) | set(np.unique(raw[-1, :]))
    border |= set(np.unique(raw[:, 0])) | set(np.unique(raw[:, -1]))
    m = 0
    for comp in range(1, n + 1):
        if comp in border:
            continue
        labels[raw == comp] = m
        m += 1
    return labels, m


@dataclass(frozen=True, eq=False)
class HarmonicBasis:
    """Circulation generators xi_i of the footprint's harmonic space.

    xi_fields[i] is the i-th potential extended over the box (hole cells
    carry the solved wall constant, outer cells zero); fields[i] is
    W_i = (1/a) grad_perp xi_i.  fluxes[i, j] is the discrete wall flux of
    xi_i through hole j divided by 2 pi, which the defining linear system
    makes the identity matrix up to factorisation roundoff; hole_values[i, j]
    is the constant xi_i takes on the wall of hole j.
    """

    xi_fields: tuple
    fields: tuple
    fluxes: np.ndarray
    hole_values: np.ndarray
    hole_labels: np.ndarray
    grid: Grid2D

    @property
    def n_holes(self) -> int:
        return len(self.xi_fields)


def harmonic_basis(grid: Grid2D, a: np.ndarray) -> HarmonicBasis:
    """Solve for the m hole generators (empty basis when simply connected)."""
    if not (a[grid.inside] > 0.0).all():
        raise ValueError("thickness must be positive on inside cells")
    labels, m = hole_components(grid)
    if m == 0:
        return HarmonicBasis(
            xi_fields=(), fields=(),
            fluxes=np.zeros((0, 0)), hole_values=np.zeros((0, 0)),
            hole_labels=labels, grid=grid,
        )

    inside = grid.inside
    idx2d = np.full(inside.shape, -1, dtype=np.int64)
    n_in = int(inside.sum())
    idx2d[inside] = np.arange(n_in)
    beta = np.where(inside, 1.0 / np.where(a > 0, a, 1.0), 0.0)
    n = n_in + m

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def add(r, c, v):
        rows.append(np.asarray(r, dtype=np.int64))
        cols.append(np.asarray(c, dtype=np.int64))
        vals.append(np.asarray(v, dtype=float))

    for d, (dx, dy) in enumerate(_DIRS):
        nb_inside = _shifted(inside, dx, dy, fill=False)
        pair = inside & nb_inside
        if d in (0, 2) and pair.any():  # each interior face once
            w = 0.5 * (beta + _shifted(beta, dx, dy, fill=0.0))[pair]
            rc = idx2d[pair]
            cc = _shifted(idx2d, dx, dy, fill=-1)[pair]
            add(rc, rc, w)
            add(cc, cc, w)
            add(rc, cc, -w)
            add(cc, rc, -w)
        cut = inside & ~nb_inside
        if not cut.any():
            continue
        w_cut = (beta / np.maximum(grid.bdry_theta[d], 1e-300))[cut]
        rc = idx2d[cut]
        nb_label = _shifted(labels, dx, dy, fill=-1)[cut]
        add(rc, rc, w_cut)  # wall weight, Dirichlet side
        holes = nb_label >= 0
        if holes.any():  # re-route the wall value to the hole constant
            hd = n_in + nb_label[holes].astype(np.int64)
            add(rc[holes], hd, -w_cut[holes])
            add(hd, rc[holes], -w_cut[holes])
            add(hd, hd, w_cut[holes])

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    lu = splu(A.tocsc())

    xi_fields = []
    fields = []
    hole_values = np.zeros((m, m))
    for i in range(m):
        rhs = np.zeros(n)
        # -2 pi wall flux normalisation: counterclockwise circulation of
        # (1/a) grad_perp xi_i around hole i comes out +2 pi
        rhs[n_in + i] = -2.0 * math.pi
        sol = lu.solve(rhs)
        xi = np.zeros(inside.shape)
        xi[inside] = sol[:n_in]
        consts = sol[n_in:]
        xi[labels >= 0] = consts[labels[labels >= 0]]
        hole_values[i] = consts
        gx, gy = grad_centered(xi, grid.h)
        wx = np.where(inside, -beta * gy, 0.0)
        wy = np.where(inside, beta * gx, 0.0)
        xi_fields.append(xi)
        fields.append(CurrentField(wx, wy, grid))

    # wall-flux matrix recomputed from the solved fields (the hole rows of
    # the system force it to the identity; this measures the roundoff)
    fluxes = np.zeros((m, m))
    for d, (dx, dy) in enumerate(_DIRS):
        nb_label = _shifted(labels, dx, dy, fill=-1)
        cut = inside & (nb_label >= 0)
        if not cut.any():
            continue
        w_cut = (beta / np.maximum(grid.bdry_theta[d], 1e-300))[cut]
        hole = nb_label[cut]
        for i, xi in enumerate(xi_fields):
            contrib = w_cut * (xi[cut] - hole_values[i][hole])
            np.add.at(fluxes[i], hole, contrib / (2.0 * math.pi))
    return HarmonicBasis(
        xi_fields=tuple(xi_fields),
        fields=tuple(fields),
        fluxes=fluxes,
        hole_values=hole_values,
        hole_labels=labels,
        grid=grid,
    )
