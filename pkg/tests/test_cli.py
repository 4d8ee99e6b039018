import json
import math
import textwrap

import pytest

from vortexfilm import cli
from vortexfilm.geometry import DomainSpec, build_grid
from vortexfilm.io import write_mask
from vortexfilm.recovery import GapTrendError

ARTIFACTS = ("u.csv", "J.csv", "j.csv", "labels.csv", "summary.json")


def _config(tmp_path, body, name="run.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return str(path)


def _run(args):
    return cli.main(list(args) + ["--quiet"])


SOLVE_EX1 = """\
    [problem]
    preset = "example1"
    H = 6.0
    resolution = 64
"""


def test_solve_writes_all_artifacts(tmp_path):
    cfg = _config(tmp_path, SOLVE_EX1)
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", str(out)]) == 0
    for name in ARTIFACTS:
        assert (out / name).is_file(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["command"] == "solve"
    assert summary["problem"] == "example1"
    assert summary["H"] == 6.0
    assert summary["schema_version"] == 1
    assert summary["grid"]["nx"] == 64
    assert summary["solver"]["iterations"] > 0
    for block, keys in {
        "energy": ("primal", "dual", "mean_field"),
        "vorticity": ("total_variation", "total_mass"),
        "complementarity": ("max_eq", "sign_violation"),
    }.items():
        assert set(keys) <= set(summary[block])
    # the odd forcing pins both contact sets at this field strength
    coin = summary["coincidence"]
    assert coin["cells_plus"] > 0 and coin["cells_minus"] > 0
    assert coin["area_plus"] == pytest.approx(coin["area_minus"], rel=0.05)


def test_solve_reruns_are_byte_identical(tmp_path):
    cfg = _config(tmp_path, SOLVE_EX1.replace("64", "48"))
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert _run(["solve", "--config", cfg, "--out", str(out1)]) == 0
    assert _run(["solve", "--config", cfg, "--out", str(out2)]) == 0
    for name in ARTIFACTS:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_zero_field_solve_is_empty(tmp_path):
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"
        H = 0.0
        resolution = 48
        """,
    )
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["vorticity"]["total_variation"] == 0.0
    assert summary["coincidence"]["cells_plus"] == 0
    assert summary["coincidence"]["cells_minus"] == 0
    assert summary["coincidence"]["r_plus_outer"] is None  # NaN -> null


def test_mask_domain_roundtrip(tmp_path):
    grid = build_grid(DomainSpec.rectangle(0.0, 1.0, 0.0, 0.5), 32)
    mask = tmp_path / "strip.mask"
    write_mask(str(mask), grid)
    cfg = _config(
        tmp_path,
        f"""\
        [problem]
        mask = "{mask}"
        film = "flat"
        field = [0.0, 0.0, 1.0]
        H = 2.0
        resolution = 32
        """,
    )
    out = tmp_path / "out"
    assert _run(["solve", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["problem"] == str(mask)


def test_mask_requires_field_direction(tmp_path, capsys):
    grid = build_grid(DomainSpec.rectangle(0.0, 1.0, 0.0, 1.0), 16)
    mask = tmp_path / "sq.mask"
    write_mask(str(mask), grid)
    cfg = _config(
        tmp_path,
        f"""\
        [problem]
        mask = "{mask}"
        film = "flat"
        """,
    )
    assert _run(["solve", "--config", cfg]) == 1
    assert "problem.field" in capsys.readouterr().err


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"

        [solver]
        tollerance = 1e-8
        """,
    )
    assert _run(["solve", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert "config error" in err
    assert "solver.tollerance" in err


def test_unknown_section_rejected(tmp_path, capsys):
    cfg = _config(tmp_path, SOLVE_EX1 + "\n[plot]\nstyle = \"fancy\"\n")
    assert _run(["solve", "--config", cfg]) == 1
    assert "unknown config section" in capsys.readouterr().err


def test_unknown_preset_rejected(tmp_path, capsys):
    cfg = _config(tmp_path, "[problem]\npreset = \"example9\"\n")
    assert _run(["solve", "--config", cfg]) == 1
    assert "unknown preset" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.toml")
    assert _run(["solve", "--config", missing]) == 1
    assert "not found" in capsys.readouterr().err


def test_preset_and_mask_are_exclusive(tmp_path, capsys):
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"
        mask = "whatever.mask"
        """,
    )
    assert _run(["solve", "--config", cfg]) == 1
    assert "exclusive" in capsys.readouterr().err


def test_relax_out_of_range(tmp_path):
    cfg = _config(tmp_path, SOLVE_EX1 + "\n[solver]\nrelax = 2.5\n")
    assert _run(["solve", "--config", cfg]) == 1


def test_resolution_flag_overrides_config(tmp_path):
    cfg = _config(tmp_path, SOLVE_EX1.replace("64", "32"))
    out = tmp_path / "out"
    rc = _run(["solve", "--config", cfg, "--out", str(out), "--resolution", "48"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["resolution"] == 48
    assert summary["grid"]["nx"] == 48


# -- sweep ---------------------------------------------------------------------


def test_single_point_sweep_matches_solve(tmp_path):
    body = SOLVE_EX1.replace("64", "48")
    solve_cfg = _config(tmp_path, body, "solve.toml")
    sweep_cfg = _config(
        tmp_path,
        body + "\n[sweep]\nH_min = 6.0\nH_max = 6.0\ncount = 1\n",
        "sweep.toml",
    )
    out_s, out_w = tmp_path / "solve_out", tmp_path / "sweep_out"
    assert _run(["solve", "--config", solve_cfg, "--out", str(out_s)]) == 0
    assert _run(["sweep", "--config", sweep_cfg, "--out", str(out_w)]) == 0
    assert (out_s / "summary.json").read_bytes() == (
        out_w / "H_00" / "summary.json"
    ).read_bytes()
    top = json.loads((out_w / "summary.json").read_text())
    assert top["command"] == "sweep"
    assert top["n_ok"] == 1 and top["failures"] == []


def test_sweep_needs_section_and_range(tmp_path, capsys):
    cfg = _config(tmp_path, SOLVE_EX1)
    assert _run(["sweep", "--config", cfg]) == 1
    assert "sweep" in capsys.readouterr().err
    bad = _config(
        tmp_path,
        SOLVE_EX1 + "\n[sweep]\nH_min = 8.0\nH_max = 4.0\ncount = 3\n",
        "bad.toml",
    )
    assert _run(["sweep", "--config", bad]) == 1
    assert "empty sweep range" in capsys.readouterr().err


def test_sweep_continues_past_failed_solves(tmp_path):
    # a starved iteration budget sinks the supercritical solves but the
    # H = 0 one still lands; the sweep must record both and exit cleanly
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"
        resolution = 48

        [solver]
        max_iter = 3

        [sweep]
        H_min = 0.0
        H_max = 8.0
        count = 3
        """,
    )
    out = tmp_path / "out"
    assert _run(["sweep", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_ok"] >= 1
    assert len(summary["failures"]) == 3 - summary["n_ok"] >= 1
    lines = (out / "sweep.csv").read_text().strip().split("\n")
    assert len(lines) == 4
    assert sum("error" in ln for ln in lines) == len(summary["failures"])


def test_sweep_all_failed_is_numerical_failure(tmp_path, capsys):
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"
        resolution = 48

        [solver]
        max_iter = 3

        [sweep]
        H_min = 4.0
        H_max = 8.0
        count = 2
        """,
    )
    assert _run(["sweep", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "every solve failed" in capsys.readouterr().err


# -- critical ------------------------------------------------------------------


def test_critical_command_finds_first_contact(tmp_path):
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"
        resolution = 64

        [critical]
        bracket = [4.0, 7.0]
        tol = 1e-3
        """,
    )
    out = tmp_path / "out"
    assert _run(["critical", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["Hc"] == pytest.approx(3.0 * math.sqrt(3.0), rel=0.02)
    assert summary["H_empty"] < summary["Hc"] < summary["H_active"]
    assert summary["contact_points"]
    assert summary["n_solves"] >= 10


def test_critical_bad_bracket_key(tmp_path):
    cfg = _config(tmp_path, SOLVE_EX1 + "\n[critical]\nbracket = 4.0\n")
    assert _run(["critical", "--config", cfg]) == 1


# -- hodge-check ---------------------------------------------------------------


def test_hodge_check_passes_on_disk(tmp_path):
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example1"
        resolution = 48

        [hodge]
        fields = 6
        seed = 0
        """,
    )
    out = tmp_path / "out"
    assert _run(["hodge-check", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["all_pass"] is True
    assert summary["max_reconstruction_rel"] <= 1e-6
    assert summary["max_orthogonality_rel"] <= 1e-6
    assert summary["fields"] == 6


def test_hodge_check_requires_seed(tmp_path, capsys):
    cfg = _config(tmp_path, SOLVE_EX1 + "\n[hodge]\nfields = 4\n")
    assert _run(["hodge-check", "--config", cfg]) == 1
    assert "hodge.seed" in capsys.readouterr().err


# -- gamma-check ---------------------------------------------------------------


def test_gamma_check_single_kappa_warns_but_passes(tmp_path, capsys):
    cfg = _config(
        tmp_path,
        f"""\
        [problem]
        preset = "example2"
        resolution = 64

        [gamma]
        H = 4.0
        kappas = [{math.e ** 5}]
        seed = 0
        """,
    )
    out = tmp_path / "out"
    assert _run(["gamma-check", "--config", cfg, "--out", str(out)]) == 0
    assert "trend unassessable" in capsys.readouterr().err
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["report"]["gaps"]) == 1
    assert summary["report"]["decreasing"] is None


def test_gamma_check_requires_kappas_and_seed(tmp_path):
    cfg = _config(tmp_path, "[problem]\npreset = \"example2\"\n\n[gamma]\nseed = 0\n")
    assert _run(["gamma-check", "--config", cfg]) == 1
    cfg2 = _config(
        tmp_path,
        "[problem]\npreset = \"example2\"\n\n[gamma]\nkappas = [100.0]\n",
        "run2.toml",
    )
    assert _run(["gamma-check", "--config", cfg2]) == 1


def test_gamma_check_trend_failure_writes_report(tmp_path, capsys, monkeypatch):
    report = {"gaps": [0.1, 0.2], "decreasing": False}

    def fake_gap(*args, **kwargs):
        raise GapTrendError("gap not strictly decreasing", report)

    monkeypatch.setattr(cli, "gamma_gap", fake_gap)
    cfg = _config(
        tmp_path,
        """\
        [problem]
        preset = "example2"
        resolution = 32

        [gamma]
        H = 4.0
        kappas = [60.0, 400.0]
        seed = 0
        """,
    )
    out = tmp_path / "out"
    assert _run(["gamma-check", "--config", cfg, "--out", str(out)]) == 2
    assert "not strictly decreasing" in capsys.readouterr().err
    summary = json.loads((out / "summary.json").read_text())
    assert summary["report"]["gaps"] == [0.1, 0.2]
