"""Acceptance gate: ten end-to-end criteria, one test (and one pass/fail
line under ``pytest -v``) per criterion.

These are heavier than the unit modules (a few minutes total) and exercise
released entry points only.  Each test prints the measured numbers next to
the required tolerance so a red line is diagnosable from the log alone.
"""

import math
import time

import numpy as np
import pytest

from vortexfilm.analysis import (
    PARABOLIC_CRITICAL_H,
    example1_oracle,
    example2_radial_oracle,
)
from vortexfilm.geometry import (
    AppliedField,
    DomainSpec,
    FilmGeometry,
    build_grid,
    effective_field,
    thickness_field,
)
from vortexfilm.hodge import HodgeOperator, harmonic_basis, weighted_inner
from vortexfilm.obstacle import (
    CurrentField,
    MeasureField,
    assemble,
    complementarity_residual,
    critical_field,
    free_boundary_radius,
    grad_centered,
    solve,
)
from vortexfilm.recovery import GreenOperator, gamma_gap, green_pair_energy

from conftest import optimal_relax, solve_preset

DOUBLE_CONTACT_OUTER_AT_16 = 0.8229681606597189


def _line(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'}: {detail}", flush=True)


def test_criterion_01_parabolic_critical_field():
    t0 = time.perf_counter()
    res = critical_field(
        FilmGeometry.example1(),
        DomainSpec.unit_disk(),
        AppliedField(-1.0, 0.0, 0.0),
        (4.0, 7.0),
        1e-3,
        256,
    )
    elapsed = time.perf_counter() - t0
    grid_h = 2.0 / 256
    rel = abs(res.Hc - PARABOLIC_CRITICAL_H) / PARABOLIC_CRITICAL_H
    worst = max(
        min(
            math.hypot(p[0] - s / math.sqrt(3.0), p[1])
            for s in (-1.0, 1.0)
        )
        for p in res.contact_points
    )
    ok = rel <= 0.02 and worst <= 2.0 * grid_h and elapsed < 60.0
    _line(
        1,
        ok,
        f"Hc={res.Hc:.6f} vs {PARABOLIC_CRITICAL_H:.6f} (rel {rel:.2e} <= 2e-2), "
        f"contact offset {worst:.4f} <= {2 * grid_h:.4f}, {elapsed:.1f}s < 60s",
    )
    assert rel <= 0.02
    assert res.contact_points and worst <= 2.0 * grid_h
    assert elapsed < 60.0


def test_criterion_02_saddle_upper_critical_field():
    res = critical_field(
        FilmGeometry.example2(),
        DomainSpec.unit_disk(),
        AppliedField(0.0, -1.0, 0.0),
        (6.0, 10.0),
        1e-3,
        256,
        which="upper",
    )
    rel = abs(res.Hc - 8.0) / 8.0
    radii = [math.hypot(*p) for p in res.contact_points]
    r_mean = float(np.mean(radii))
    r_rel = abs(r_mean - 1.0 / math.sqrt(2.0)) * math.sqrt(2.0)
    ok = rel <= 0.02 and r_rel <= 0.01
    _line(
        2,
        ok,
        f"Hc={res.Hc:.6f} vs 8 (rel {rel:.2e} <= 2e-2), contact radius "
        f"{r_mean:.6f} vs {1 / math.sqrt(2):.6f} (rel {r_rel:.2e} <= 1e-2)",
    )
    assert rel <= 0.02
    assert r_rel <= 0.01


def test_criterion_03_saddle_outer_radius_and_lower_onset():
    oracle = example2_radial_oracle(16.0)
    frozen_dev = abs(oracle.outer_radius - DOUBLE_CONTACT_OUTER_AT_16)
    # projected SOR hits its rounding floor near 1.7e-10 on this grid, so
    # ask for 1e-9; the radius read-off only needs the 1e-8 contact band
    _, _, _, sol = solve_preset("example2", 16.0, 256, tol=1e-9)
    r_outer, _ = free_boundary_radius(sol, which="upper", edge="outer")
    rel = abs(r_outer - oracle.outer_radius) / oracle.outer_radius
    onset = critical_field(
        FilmGeometry.example2(),
        DomainSpec.unit_disk(),
        AppliedField(0.0, -1.0, 0.0),
        (12.0, 20.0),
        1e-3,
        192,
        which="lower",
    )
    onset_rel = abs(onset.Hc - 16.0) / 16.0
    ok = frozen_dev <= 1e-6 and rel <= 0.01 and onset_rel <= 0.02
    _line(
        3,
        ok,
        f"oracle R(16)={oracle.outer_radius:.9f} (frozen dev {frozen_dev:.1e} <= 1e-6), "
        f"2D outer r={r_outer:.6f} (rel {rel:.2e} <= 1e-2), lower onset "
        f"Hc={onset.Hc:.4f} vs 16 (rel {onset_rel:.2e} <= 2e-2)",
    )
    assert frozen_dev <= 1e-6
    assert rel <= 0.01
    assert onset_rel <= 0.02


def test_criterion_04_subcritical_closed_form_convergence():
    ref = example1_oracle(4.0)
    errs = {}
    for res in (128, 256):
        grid, _, _, sol = solve_preset("example1", 4.0, res)
        exact = np.where(grid.inside, ref.u(grid.X, grid.Y), 0.0)
        errs[res] = float(np.max(np.abs(sol.u - exact)))
        assert errs[res] <= 5.0 * grid.h ** 2
    factor = errs[128] / errs[256]
    ok = 3.5 <= factor <= 4.5
    _line(
        4,
        ok,
        f"closed-form L_inf err {errs[128]:.2e} (res 128), {errs[256]:.2e} "
        f"(res 256), refinement factor {factor:.3f} in [3.5, 4.5]",
    )
    assert 3.5 <= factor <= 4.5


def test_criterion_05_complementarity_and_small_grid_oracle(ex1_H6):
    _, _, _, sol = ex1_H6
    max_eq, sign_viol = complementarity_residual(sol)

    grid = build_grid(DomainSpec.rectangle(0, 1, 0, 1), 12)
    rng = np.random.default_rng(99)
    worst = 0.0
    n_active = 0
    for seed in range(20):
        f_rng = np.random.default_rng(seed)
        coef = f_rng.normal(size=5) * 30.0
        F = (coef[0] + coef[1] * grid.X + coef[2] * grid.Y
             + coef[3] * np.sin(3 * grid.X) + coef[4] * grid.X * grid.Y)
        p = assemble(grid, np.ones_like(F), F)
        fast = solve(p, tol=1e-12)
        n_active += int((fast.labels != 0).sum() > 0)
        u = rng.uniform(p.lo, p.up)
        order = np.arange(p.n_cells)
        for _ in range(4000):
            rng.shuffle(order)
            delta = 0.0
            for k in order:
                s = p.b[k]
                for d in range(4):
                    m = p.nb[k, d]
                    if m >= 0:
                        s += p.w[k, d] * u[m]
                unew = min(max(s / p.diag[k], p.lo[k]), p.up[k])
                delta = max(delta, abs(unew - u[k]))
                u[k] = unew
            if delta < 1e-15:
                break
        worst = max(worst, float(np.max(np.abs(p.flatten(fast.u) - u))))
    ok = max_eq <= 1e-8 and sign_viol <= 1e-8 and worst <= 1e-8 and n_active >= 5
    _line(
        5,
        ok,
        f"complementarity eq {max_eq:.1e} / sign {sign_viol:.1e} <= 1e-8, "
        f"oracle L_inf gap {worst:.1e} <= 1e-8 over 20 seeds ({n_active} active)",
    )
    assert max_eq <= 1e-8 and sign_viol <= 1e-8
    assert worst <= 1e-8
    assert n_active >= 5


def test_criterion_06_field_negation_and_odd_symmetry(ex1_H6):
    grid = build_grid(DomainSpec.unit_disk(), 96)
    film = FilmGeometry.example2()
    a = thickness_field(film, grid)
    relax = optimal_relax(96)
    eff = effective_field(film, AppliedField(0.0, -12.0, 0.0), grid)
    plus = solve(assemble(grid, a, eff.F), tol=1e-10, relax=relax)
    minus = solve(assemble(grid, a, -eff.F), tol=1e-10, relax=relax)
    neg_gap = float(np.max(np.abs(plus.u + minus.u)))

    g1, _, _, sol1 = ex1_H6
    odd_gap = float(np.max(np.abs(sol1.u + sol1.u[::-1, :])))
    ok = neg_gap <= 1e-10 and odd_gap <= 1e-8
    _line(
        6,
        ok,
        f"u(F) + u(-F) = {neg_gap:.1e} <= 1e-10, odd-in-x1 defect "
        f"{odd_gap:.1e} <= 1e-8",
    )
    assert neg_gap <= 1e-10
    assert odd_gap <= 1e-8


def test_criterion_07_hodge_identities():
    grid = build_grid(DomainSpec.unit_disk(), 64)
    film = FilmGeometry.example1()
    a = thickness_field(film, grid)
    op = HodgeOperator(grid, a)
    rng = np.random.default_rng(11)
    worst_recon = worst_ortho = 0.0
    for _ in range(20):
        def comp():
            c = rng.normal(size=8)
            return (c[0] + c[1] * grid.X + c[2] * grid.Y
                    + 0.5 * (c[3] * grid.X ** 2 + c[4] * grid.X * grid.Y
                             + c[5] * grid.Y ** 2)
                    + 0.3 * np.sin(c[6] + 2 * grid.X) * np.cos(c[7] + 2 * grid.Y))

        Z = CurrentField(jx=comp(), jy=comp(), grid=grid)
        split = op.decompose(Z)
        norm = math.sqrt(weighted_inner(Z, Z, a))
        rec = split.reconstruction()
        diff = CurrentField(jx=Z.jx - rec.jx, jy=Z.jy - rec.jy, grid=grid)
        worst_recon = max(worst_recon, math.sqrt(weighted_inner(diff, diff, a)) / norm)
        parts = [split.U, split.V, split.W]
        norms = [math.sqrt(max(weighted_inner(q, q, a), 0.0)) for q in parts]
        for i in range(3):
            for k in range(i + 1, 3):
                if norms[i] * norms[k] > 1e-14 * norm * norm:
                    worst_ortho = max(
                        worst_ortho,
                        abs(weighted_inner(parts[i], parts[k], a)) / (norms[i] * norms[k]),
                    )

    ann = build_grid(DomainSpec.annulus(0.4, 1.0), 256)
    basis = harmonic_basis(ann, np.ones((ann.nx, ann.ny)))
    flux_dev = float(np.max(np.abs(basis.fluxes - np.eye(basis.n_holes))))
    ok = worst_recon <= 1e-6 and worst_ortho <= 1e-6 and flux_dev <= 1e-4
    _line(
        7,
        ok,
        f"20 fields: reconstruction {worst_recon:.1e} / orthogonality "
        f"{worst_ortho:.1e} <= 1e-6, annulus flux matrix dev {flux_dev:.1e} <= 1e-4",
    )
    assert worst_recon <= 1e-6
    assert worst_ortho <= 1e-6
    assert flux_dev <= 1e-4


def test_criterion_08_green_route_agreement(flat_green):
    grid = build_grid(DomainSpec.unit_disk(), 192)
    a = np.ones((grid.nx, grid.ny))
    G = GreenOperator.from_grid(grid, a)
    rng = np.random.default_rng(7)
    taper = np.maximum(1.0 - grid.X ** 2 - grid.Y ** 2, 0.0)
    worst = 0.0
    for _ in range(5):
        c = rng.normal(size=5)
        raw = (c[0] + c[1] * grid.X + c[2] * grid.Y
               + c[3] * np.sin(2 * grid.X + 1) + c[4] * grid.X * grid.Y)
        dens = np.where(grid.inside, taper * raw, 0.0)
        lhs = green_pair_energy(MeasureField(density=dens, grid=grid), G, a)
        psi = G.solve_mass(dens)
        dx, dy = grad_centered(psi, grid.h)
        rhs = float(np.sum(((dx * dx + dy * dy) / a)[grid.inside]) * grid.cell_area)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))

    g96, a96, _, G96 = flat_green
    srng = np.random.default_rng(0)
    worst_sym = 0.0
    for _ in range(20):
        while True:
            p = srng.uniform(-0.9, 0.9, 2)
            q = srng.uniform(-0.9, 0.9, 2)
            if p @ p < 0.8 and q @ q < 0.8 and np.hypot(*(p - q)) > 0.1:
                break
        pc = g96.cell_center(*g96.cell_of(*p))
        qc = g96.cell_center(*g96.cell_of(*q))
        v1, v2 = G96.value(pc, qc), G96.value(qc, pc)
        worst_sym = max(worst_sym, abs(v1 - v2) / max(abs(v1), 1e-12))
    ok = worst <= 0.01 and worst_sym <= 1e-8
    _line(
        8,
        ok,
        f"pair energy vs gradient quadrature {worst:.2%} <= 1%, Green symmetry "
        f"{worst_sym:.1e} <= 1e-8",
    )
    assert worst <= 0.01
    assert worst_sym <= 1e-8


def test_criterion_09_finite_kappa_gap_trend():
    t0 = time.perf_counter()
    kappas = [math.e ** 4, math.e ** 6, math.e ** 8]
    _, _, eff, sol = solve_preset("example2", 12.0, 192)
    report = gamma_gap(sol, eff, (0.0, 0.0), kappas, seed=0)
    gaps = report["gaps"]
    ratio = abs(gaps[-1]) / abs(gaps[0])

    _, _, eff0, sol0 = solve_preset("example2", 4.0, 96)
    free = gamma_gap(sol0, eff0, (0.0, 0.0), kappas, seed=0)
    free_dev = abs(free["gaps"][-1]) / max(1.0, abs(free["reference_energy"]))
    elapsed = time.perf_counter() - t0

    ok = (
        report["decreasing"] is True
        and ratio <= 0.25
        and free_dev <= 0.10
        and elapsed < 600.0
    )
    _line(
        9,
        ok,
        f"gaps {[f'{g:+.4f}' for g in gaps]} decreasing={report['decreasing']}, "
        f"|gap(e^8)|/|gap(e^4)| = {ratio:.3f} (<= 0.25 required), vortex-free "
        f"dev {free_dev:.1e} <= 0.1, {elapsed:.0f}s < 600s",
    )
    assert report["decreasing"] is True
    assert free_dev <= 0.10
    assert elapsed < 600.0
    # measured ~0.41 at every resolution and seed tried: the construction's
    # per-vortex core cost shrinks the gap too slowly for this bound even
    # though the trend itself is robustly downward
    assert ratio <= 0.25


def test_criterion_10_field_sweep_monotonicity():
    H_values = np.linspace(4.0, 32.0, 15)
    areas_p, areas_m, radii = [], [], []
    cell_area = None
    for H in H_values:
        grid, _, _, sol = solve_preset("example2", float(H), 128, tol=1e-9)
        cell_area = grid.cell_area
        areas_p.append(float(np.sum(sol.labels == 1)) * cell_area)
        areas_m.append(float(np.sum(sol.labels == -1)) * cell_area)
        if areas_p[-1] > 0:
            r, _ = free_boundary_radius(sol, which="upper", edge="outer")
            # the grazing first-contact ring is thinner than a ray step and
            # yields no usable transitions; treat it like the empty sets
            radii.append((float(H), None if math.isnan(r) else r))
        else:
            radii.append((float(H), None))

    slack = 2.0 * cell_area
    grow_p = all(b >= a - slack for a, b in zip(areas_p, areas_p[1:]))
    grow_m = all(b >= a - slack for a, b in zip(areas_m, areas_m[1:]))
    rs = [r for _, r in radii if r is not None]
    r_grow = all(b > a for a, b in zip(rs, rs[1:]))
    ok = grow_p and grow_m and r_grow and len(rs) >= 10
    _line(
        10,
        ok,
        f"areas nondecreasing: S+ {grow_p}, S- {grow_m} (slack 2 cells); outer "
        f"radius strictly increasing over {len(rs)} nonempty fields: {r_grow}",
    )
    assert grow_p and grow_m
    assert len(rs) >= 10
    assert r_grow
