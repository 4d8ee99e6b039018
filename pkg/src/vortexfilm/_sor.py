"""Projected SOR kernel (numba) for the bilateral obstacle problem.

Works on the flattened symmetric system assembled in `obstacle`:

    minimize  1/2 u^T A u - b^T u   subject to  lo <= u <= up,

where A = diag - sum of neighbour weights is an M-matrix.  One sweep visits
cells in the fixed natural (lexicographic) order, takes the over-relaxed
Gauss-Seidel step and clamps to [lo, up].  For any relax in (0, 2) each
single-cell step cannot increase the energy (1D convex quadratic followed by
projection), so the per-sweep energy log is non-increasing — an invariant the
tests assert.

Convergence is judged on the *physical* projected residual
|u - clamp(u + r/diag)| * diag * invscale, where invscale = 1/h^2
rescales the energy-gradient residual back to the units of (L u + F).
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["solve_psor", "projected_residual", "dual_energy_flat"]


@njit(cache=True)
def dual_energy_flat(u, nb, w, diag, b):
    """1/2 u^T A u - b^T u for the assembled system."""
    e = 0.0
    for k in range(u.shape[0]):
        s = 0.0
        for d in range(4):
            m = nb[k, d]
            if m >= 0:
                s += w[k, d] * u[m]
        e += 0.5 * u[k] * (diag[k] * u[k] - s) - b[k] * u[k]
    return e


@njit(cache=True)
def projected_residual(u, nb, w, diag, b, lo, up, invscale):
    """Max-norm of the projected residual in physical (L u + F) units."""
    worst = 0.0
    for k in range(u.shape[0]):
        s = b[k]
        for d in range(4):
            m = nb[k, d]
            if m >= 0:
                s += w[k, d] * u[m]
        step = u[k] + (s - diag[k] * u[k]) / diag[k]
        if step < lo[k]:
            step = lo[k]
        elif step > up[k]:
            step = up[k]
        rho = abs(u[k] - step) * diag[k] * invscale[k]
        if rho > worst:
            worst = rho
    return worst


@njit(cache=True)
def solve_psor(u, nb, w, diag, b, lo, up, invscale, omega, tol,
               max_sweeps, check_every, energy_log):
    """Run projected SOR sweeps in place; returns (sweeps, residual).

    energy_log: preallocated float64 array; entry s-1 receives the energy
    after sweep s while s <= len(energy_log) (pass a 0-length array to skip).
    """
    n = u.shape[0]
    nlog = energy_log.shape[0]
    sweeps = 0
    res = np.inf
    while sweeps < max_sweeps:
        for k in range(n):
            s = b[k]
            for d in range(4):
                m = nb[k, d]
                if m >= 0:
                    s += w[k, d] * u[m]
            un = u[k] + omega * (s - diag[k] * u[k]) / diag[k]
            if un < lo[k]:
                un = lo[k]
            elif un > up[k]:
                un = up[k]
            u[k] = un
        sweeps += 1
        if sweeps <= nlog:
            energy_log[sweeps - 1] = dual_energy_flat(u, nb, w, diag, b)
        if sweeps % check_every == 0 or sweeps == max_sweeps:
            res = projected_residual(u, nb, w, diag, b, lo, up, invscale)
            if res <= tol:
                break
    return sweeps, res
