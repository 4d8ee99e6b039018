"""Configuration-driven command line front end.

One TOML config describes one reproducible run: the problem (preset or mask
footprint, film, applied field), the solver knobs, and a block per command.
Seeds are part of the config for every stochastic command, and all artifacts
are written through the deterministic writers in `io`, so rerunning an
unchanged config reproduces every CSV/JSON byte for byte.

Commands
    solve        one obstacle solve; writes u.csv, J.csv, j.csv, labels.csv,
                 summary.json
    sweep        a family of solves over applied-field magnitudes; per-H
                 artifact directories plus an aggregate sweep.csv
    critical     bisection for the first-contact field magnitude
    hodge-check  decomposition / orthogonality property run on random fields
    gamma-check  finite-kappa energy gap trend against the mean-field limit

Exit codes: 0 success, 1 configuration error, 2 numerical failure.  Error
messages name the failing stage.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python 3.10
    import tomli as tomllib

from . import io
from .geometry import (
    AppliedField,
    DomainSpec,
    FilmGeometry,
    Grid2D,
    build_grid,
    effective_field,
    thickness_field,
)
from .hodge import HodgeOperator, weighted_inner
from .obstacle import (
    ConvergenceError,
    CurrentField,
    ObstacleSolution,
    assemble,
    complementarity_residual,
    critical_field,
    current,
    dual_energy,
    free_boundary_radius,
    mean_field_energy,
    primal_energy,
    solve,
    vorticity,
)
from .presets import PRESET_NAMES, get_preset
from .recovery import ConfigurationError, GapTrendError, gamma_gap

__all__ = ["ConfigError", "RunConfig", "main"]


class ConfigError(ValueError):
    """Invalid or incomplete run configuration (exit code 1)."""


# Allowed sections and keys; anything else is rejected by name before any
# compute starts.
_SCHEMA = {
    "problem": {"preset", "mask", "film", "H", "field", "resolution"},
    "solver": {"tol", "max_iter", "relax"},
    "output": {"dir"},
    "sweep": {"H_min", "H_max", "count", "workers"},
    "critical": {"bracket", "tol", "which"},
    "hodge": {"fields", "seed"},
    "gamma": {"H", "kappas", "seed", "count_rule"},
}


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section, table in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(table, dict):
            raise ConfigError(f"config section {section!r} must be a table")
        for key in table:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key '{section}.{key}'")
    return raw


def _number(table: dict, section: str, key: str, default):
    value = table.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{section}.{key}' must be a number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description; built before any compute starts."""

    label: str                 # preset name or mask path, for reports
    domain: DomainSpec
    film: FilmGeometry
    direction: AppliedField    # unit-magnitude applied direction
    H: float                   # magnitude; applied field = direction * H
    resolution: int
    tol: float
    max_iter: int
    relax: float | None
    out_dir: str
    sections: dict             # validated command blocks

    @property
    def applied(self) -> AppliedField:
        return self.direction.scaled(self.H)


def _run_config(args: argparse.Namespace) -> RunConfig:
    raw = _load_toml(args.config)
    prob = raw.get("problem")
    if not prob:
        raise ConfigError("missing [problem] section")

    if "preset" in prob and "mask" in prob:
        raise ConfigError("'problem.preset' and 'problem.mask' are exclusive")
    if "preset" in prob:
        name = prob["preset"]
        if name not in PRESET_NAMES:
            raise ConfigError(
                f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}"
            )
        preset = get_preset(name)
        label, domain, film = name, preset.domain, preset.film
        direction = preset.direction
    elif "mask" in prob:
        if "film" not in prob:
            raise ConfigError("mask domains need 'problem.film' (a film preset name)")
        try:
            film = FilmGeometry.by_name(prob["film"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        domain = DomainSpec.from_mask(prob["mask"])
        label = prob["mask"]
        direction = None
    else:
        raise ConfigError("[problem] needs 'preset' or 'mask'")

    if "field" in prob:
        comps = prob["field"]
        if not (isinstance(comps, list) and len(comps) == 3):
            raise ConfigError("'problem.field' must be a list [H1, H2, H3]")
        direction = AppliedField(*(float(c) for c in comps))
    if direction is None:
        raise ConfigError("mask configs need an explicit 'problem.field' direction")

    H = _number(prob, "problem", "H", 1.0)
    resolution = int(args.resolution or prob.get("resolution", 128))

    solver = raw.get("solver", {})
    tol = _number(solver, "solver", "tol", 1e-8)
    max_iter = int(_number(solver, "solver", "max_iter", 1_000_000))
    relax = _number(solver, "solver", "relax", None)
    if relax is not None and not 0.0 < relax < 2.0:
        raise ConfigError(f"'solver.relax' must lie in (0, 2), got {relax}")

    out_dir = args.out or raw.get("output", {}).get("dir", "out")
    return RunConfig(
        label=label,
        domain=domain,
        film=film,
        direction=direction,
        H=H,
        resolution=resolution,
        tol=tol,
        max_iter=max_iter,
        relax=relax,
        out_dir=str(out_dir),
        sections=raw,
    )


# -- shared pipeline pieces --------------------------------------------------


def _setup(cfg: RunConfig, H: float):
    """Grid, thickness, effective field, assembled problem at magnitude H."""
    grid = build_grid(cfg.domain, cfg.resolution)
    a = thickness_field(cfg.film, grid)
    eff = effective_field(cfg.film, cfg.direction.scaled(H), grid)
    problem = assemble(grid, a, eff.F)
    return grid, a, eff, problem


def _relax_for(cfg: RunConfig, grid: Grid2D) -> float:
    if cfg.relax is not None:
        return cfg.relax
    return 2.0 / (1.0 + math.sin(math.pi / max(grid.nx, grid.ny)))


def _solve_one(cfg: RunConfig, H: float) -> tuple:
    grid, a, eff, problem = _setup(cfg, H)
    sol = solve(
        problem, tol=cfg.tol, max_iter=cfg.max_iter, relax=_relax_for(cfg, grid)
    )
    return grid, a, eff, sol


def _solve_summary(cfg: RunConfig, H: float, grid, a, eff, sol: ObstacleSolution) -> dict:
    J = vorticity(sol)
    j = current(sol, eff, a)
    max_eq, sign_viol = complementarity_residual(sol)
    area = grid.cell_area
    applied = cfg.direction.scaled(H)
    r_outer, _ = free_boundary_radius(sol, which="upper", edge="outer")
    r_inner, _ = free_boundary_radius(sol, which="upper", edge="inner")
    return {
        "command": "solve",
        "problem": cfg.label,
        "H": H,
        "applied_field": [applied.H1, applied.H2, applied.H3],
        "resolution": cfg.resolution,
        "grid": {"nx": grid.nx, "ny": grid.ny, "h": grid.h, "n_inside": grid.n_inside},
        "solver": {
            "tol": cfg.tol,
            "relax": _relax_for(cfg, grid),
            "iterations": sol.iterations,
            "residual_inf": sol.residual_inf,
        },
        "energy": {
            "primal": primal_energy(sol),
            "dual": dual_energy(sol),
            "mean_field": mean_field_energy(j, J, a, eff, (applied.H1, applied.H2)),
        },
        "vorticity": {
            "total_variation": J.total_variation,
            "total_mass": J.total_mass,
        },
        "coincidence": {
            "area_plus": float(np.sum(sol.labels == 1)) * area,
            "area_minus": float(np.sum(sol.labels == -1)) * area,
            "cells_plus": int(np.sum(sol.labels == 1)),
            "cells_minus": int(np.sum(sol.labels == -1)),
            "r_plus_outer": r_outer,
            "r_plus_inner": r_inner,
        },
        "complementarity": {"max_eq": max_eq, "sign_violation": sign_viol},
    }


def _write_solve_artifacts(out_dir: str, grid, sol: ObstacleSolution, eff, a, summary: dict) -> None:
    io.ensure_dir(out_dir)
    J = vorticity(sol)
    j = current(sol, eff, a)
    io.write_field_csv(f"{out_dir}/u.csv", grid, sol.u, header="x,y,u")
    io.write_field_csv(f"{out_dir}/J.csv", grid, J.density, header="x,y,J")
    io.write_vector_csv(f"{out_dir}/j.csv", grid, j.jx, j.jy, header="x,y,jx,jy")
    io.write_field_csv(
        f"{out_dir}/labels.csv", grid, sol.labels.astype(float), header="x,y,label"
    )
    io.write_summary_json(f"{out_dir}/summary.json", summary)


def _say(args: argparse.Namespace, message: str) -> None:
    if not args.quiet:
        print(message)


# -- commands -----------------------------------------------------------------


def cmd_solve(cfg: RunConfig, args: argparse.Namespace) -> int:
    grid, a, eff, sol = _solve_one(cfg, cfg.H)
    summary = _solve_summary(cfg, cfg.H, grid, a, eff, sol)
    _write_solve_artifacts(cfg.out_dir, grid, sol, eff, a, summary)
    _say(
        args,
        f"solve: {cfg.label} H={cfg.H:g} res={cfg.resolution} -> "
        f"{sol.iterations} sweeps, primal={summary['energy']['primal']:.6g}, "
        f"S+={summary['coincidence']['cells_plus']} cells, "
        f"S-={summary['coincidence']['cells_minus']} cells -> {cfg.out_dir}/",
    )
    return 0


def cmd_sweep(cfg: RunConfig, args: argparse.Namespace) -> int:
    block = cfg.sections.get("sweep")
    if not block:
        raise ConfigError("sweep needs a [sweep] section")
    H_min = _number(block, "sweep", "H_min", None)
    H_max = _number(block, "sweep", "H_max", None)
    count = int(_number(block, "sweep", "count", 0) or 0)
    workers = int(_number(block, "sweep", "workers", 1))
    if H_min is None or H_max is None or count < 1:
        raise ConfigError("sweep needs 'H_min', 'H_max' and 'count' >= 1")
    if H_max < H_min:
        raise ConfigError(f"empty sweep range: H_max={H_max:g} < H_min={H_min:g}")
    values = (
        [H_min] if count == 1 else list(np.linspace(H_min, H_max, count))
    )

    def one(idx_H):
        idx, H = idx_H
        sub = f"{cfg.out_dir}/H_{idx:02d}"
        try:
            grid, a, eff, sol = _solve_one(cfg, H)
            summary = _solve_summary(cfg, H, grid, a, eff, sol)
            _write_solve_artifacts(sub, grid, sol, eff, a, summary)
            return idx, H, "ok", summary
        except (ConvergenceError, ValueError) as exc:
            return idx, H, f"error: {exc}", None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, enumerate(values)))
    else:
        results = [one(pair) for pair in enumerate(values)]
    results.sort(key=lambda r: r[0])

    rows = [
        "index,H,status,primal_energy,tv_vorticity,area_plus,area_minus,"
        "r_plus_inner,r_plus_outer"
    ]
    failures = []
    for idx, H, status, summary in results:
        if summary is None:
            failures.append({"index": idx, "H": H, "status": status})
            rows.append(f"{idx},{H:.17g},\"{status}\",,,,,,")
            continue
        c = summary["coincidence"]
        rows.append(
            f"{idx},{H:.17g},ok,{summary['energy']['primal']:.17g},"
            f"{summary['vorticity']['total_variation']:.17g},"
            f"{c['area_plus']:.17g},{c['area_minus']:.17g},"
            f"{c['r_plus_inner']:.17g},{c['r_plus_outer']:.17g}"
        )
    io.ensure_dir(cfg.out_dir)
    with open(f"{cfg.out_dir}/sweep.csv", "w") as fh:
        fh.write("\n".join(rows) + "\n")
    io.write_summary_json(
        f"{cfg.out_dir}/summary.json",
        {
            "command": "sweep",
            "problem": cfg.label,
            "resolution": cfg.resolution,
            "H_values": values,
            "n_ok": len(values) - len(failures),
            "failures": failures,
        },
    )
    _say(
        args,
        f"sweep: {cfg.label} {len(values)} solves on [{H_min:g}, {H_max:g}], "
        f"{len(failures)} failed -> {cfg.out_dir}/sweep.csv",
    )
    if len(failures) == len(values):
        print("numerical failure [sweep]: every solve failed", file=sys.stderr)
        return 2
    return 0


def cmd_critical(cfg: RunConfig, args: argparse.Namespace) -> int:
    block = cfg.sections.get("critical", {})
    bracket = block.get("bracket", [0.0, 4.0 * max(cfg.H, 1.0)])
    if not (isinstance(bracket, list) and len(bracket) == 2):
        raise ConfigError("'critical.bracket' must be a list [H_lo, H_hi]")
    tol = _number(block, "critical", "tol", 1e-3)
    which = block.get("which", "any")
    if which not in ("any", "upper", "lower"):
        raise ConfigError(f"'critical.which' must be any/upper/lower, got {which!r}")
    result = critical_field(
        cfg.film,
        cfg.domain,
        cfg.direction,
        (float(bracket[0]), float(bracket[1])),
        tol,
        cfg.resolution,
        which=which,
        solver_tol=cfg.tol,
        relax=cfg.relax,
        max_iter=cfg.max_iter,
    )
    io.ensure_dir(cfg.out_dir)
    io.write_summary_json(
        f"{cfg.out_dir}/summary.json",
        {
            "command": "critical",
            "problem": cfg.label,
            "resolution": cfg.resolution,
            "which": which,
            "bracket": [float(bracket[0]), float(bracket[1])],
            "tol": tol,
            "Hc": result.Hc,
            "H_empty": result.H_empty,
            "H_active": result.H_active,
            "contact_points": [list(p) for p in result.contact_points],
            "n_solves": result.n_solves,
        },
    )
    _say(
        args,
        f"critical: {cfg.label} res={cfg.resolution} -> Hc={result.Hc:.6g} "
        f"({result.n_solves} solves) -> {cfg.out_dir}/summary.json",
    )
    return 0


def _random_smooth_field(grid: Grid2D, rng: np.random.Generator) -> CurrentField:
    """Random low-order polynomial + sine current field on the grid."""
    X, Y = grid.X, grid.Y

    def comp():
        c = rng.normal(size=8)
        return (
            c[0]
            + c[1] * X
            + c[2] * Y
            + 0.5 * (c[3] * X * X + c[4] * X * Y + c[5] * Y * Y)
            + 0.3 * np.sin(c[6] + 2.0 * X) * np.cos(c[7] + 2.0 * Y)
        )

    return CurrentField(jx=comp(), jy=comp(), grid=grid)


def cmd_hodge_check(cfg: RunConfig, args: argparse.Namespace) -> int:
    block = cfg.sections.get("hodge", {})
    n_fields = int(_number(block, "hodge", "fields", 20))
    if "seed" not in block:
        raise ConfigError("hodge-check needs 'hodge.seed' (stochastic command)")
    seed = int(_number(block, "hodge", "seed", None))
    grid = build_grid(cfg.domain, cfg.resolution)
    a = thickness_field(cfg.film, grid)
    op = HodgeOperator(grid, a)
    rng = np.random.default_rng(seed)

    worst_recon = 0.0
    worst_ortho = 0.0
    worst_defect = 0.0
    for _ in range(n_fields):
        Z = _random_smooth_field(grid, rng)
        split = op.decompose(Z)
        norm = math.sqrt(weighted_inner(Z, Z, a))
        rec = split.reconstruction()
        diff = CurrentField(jx=Z.jx - rec.jx, jy=Z.jy - rec.jy, grid=grid)
        worst_recon = max(
            worst_recon, math.sqrt(weighted_inner(diff, diff, a)) / norm
        )
        parts = [split.U, split.V, split.W]
        norms = [math.sqrt(max(weighted_inner(p, p, a), 0.0)) for p in parts]
        for i in range(3):
            for k in range(i + 1, 3):
                scale = norms[i] * norms[k]
                if scale > 1e-14 * norm * norm:
                    worst_ortho = max(
                        worst_ortho,
                        abs(weighted_inner(parts[i], parts[k], a)) / scale,
                    )
        worst_defect = max(worst_defect, abs(split.neumann_defect))

    all_pass = worst_recon <= 1e-6 and worst_ortho <= 1e-6
    io.ensure_dir(cfg.out_dir)
    io.write_summary_json(
        f"{cfg.out_dir}/summary.json",
        {
            "command": "hodge-check",
            "problem": cfg.label,
            "resolution": cfg.resolution,
            "fields": n_fields,
            "seed": seed,
            "max_reconstruction_rel": worst_recon,
            "max_orthogonality_rel": worst_ortho,
            "max_neumann_defect": worst_defect,
            "threshold": 1e-6,
            "all_pass": all_pass,
        },
    )
    _say(
        args,
        f"hodge-check: {cfg.label} {n_fields} fields -> recon {worst_recon:.2e}, "
        f"ortho {worst_ortho:.2e}, {'all pass' if all_pass else 'FAIL'} "
        f"-> {cfg.out_dir}/summary.json",
    )
    if not all_pass:
        print(
            "numerical failure [hodge-check]: decomposition exceeded tolerance",
            file=sys.stderr,
        )
        return 2
    return 0


def cmd_gamma_check(cfg: RunConfig, args: argparse.Namespace) -> int:
    block = cfg.sections.get("gamma")
    if not block:
        raise ConfigError("gamma-check needs a [gamma] section")
    if "kappas" not in block or not isinstance(block["kappas"], list):
        raise ConfigError("gamma-check needs 'gamma.kappas' (a list)")
    if "seed" not in block:
        raise ConfigError("gamma-check needs 'gamma.seed' (stochastic command)")
    kappas = [float(k) for k in block["kappas"]]
    seed = int(_number(block, "gamma", "seed", None))
    count_rule = block.get("count_rule", "mass")
    H = _number(block, "gamma", "H", cfg.H)

    if len(kappas) == 1:
        print(
            "gamma-check: single kappa value - trend unassessable", file=sys.stderr
        )

    grid, a, eff, sol = _solve_one(cfg, H)
    applied = cfg.direction.scaled(H)
    try:
        report = gamma_gap(
            sol,
            eff,
            (applied.H1, applied.H2),
            kappas,
            seed=seed,
            count_rule=count_rule,
        )
        failed = None
    except GapTrendError as exc:
        report = exc.report
        failed = str(exc)
    except (ValueError, ConfigurationError) as exc:
        print(f"numerical failure [gamma-check]: {exc}", file=sys.stderr)
        return 2

    io.ensure_dir(cfg.out_dir)
    io.write_summary_json(
        f"{cfg.out_dir}/summary.json",
        {
            "command": "gamma-check",
            "problem": cfg.label,
            "H": H,
            "resolution": cfg.resolution,
            "report": report,
        },
    )
    gaps = ", ".join(f"{g:+.4f}" for g in report["gaps"])
    _say(
        args,
        f"gamma-check: {cfg.label} H={H:g} kappas={kappas} -> gaps [{gaps}], "
        f"decreasing={report['decreasing']} -> {cfg.out_dir}/summary.json",
    )
    if failed is not None:
        print(f"numerical failure [gamma-check]: {failed}", file=sys.stderr)
        return 2
    return 0


_COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "critical": cmd_critical,
    "hodge-check": cmd_hodge_check,
    "gamma-check": cmd_gamma_check,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vortexfilm",
        description="Mean-field vortex density runs driven by a TOML config.",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to the TOML run config")
    parser.add_argument("--out", help="output directory (overrides [output].dir)")
    parser.add_argument(
        "--resolution", type=int, help="grid resolution (overrides [problem].resolution)"
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress lines")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _run_config(args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"numerical failure [solve]: {exc}", file=sys.stderr)
        return 2
    except ConfigurationError as exc:
        print(f"numerical failure [vortex sampling]: {exc}", file=sys.stderr)
        return 2
    except GapTrendError as exc:
        print(f"numerical failure [gamma-check]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
