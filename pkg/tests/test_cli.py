"""Command-line surface: subcommands, config handling, output formats."""

import csv
import dataclasses
import io
import json

import numpy as np
import pytest

import relkin.bessel
from relkin.cli import (
    EXIT_CONFIG,
    EXIT_DEGENERATE,
    EXIT_OK,
    EXIT_SOLVE_FAILED,
    EXIT_SUITE_FAILED,
    ConfigError,
    RunConfig,
    config_to_ini,
    load_config,
    main,
    moment_quadrature_table,
)
from relkin.macro import mach_number, sound_speed


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out), err


# ----------------------------------------------------------------------
# soundspeed
# ----------------------------------------------------------------------

class TestSoundspeed:
    def test_classical_limit_record(self, capsys):
        code, rec, _ = run_json(
            capsys, "soundspeed", "--T", "1e-4", "--c", "1", "--json")
        assert code == EXIT_OK
        assert rec["schema"] == "relkin/1"
        assert rec["z"] == 1e4
        # low-temperature speed approaches sqrt(5/3 T)
        assert rec["c_inf"] == pytest.approx(
            np.sqrt(5.0 / 3.0 * 1e-4), rel=1e-3)
        assert rec["c_hat_inf"] < rec["c_inf"]
        assert set(rec) >= {"c_inf", "c_hat_inf", "z", "a1", "a2", "a3"}

    def test_negative_temperature_rejected(self, capsys):
        code, _, err = run(capsys, "soundspeed", "--T", "-1")
        assert code == EXIT_CONFIG
        assert "--T" in err

    def test_bad_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["soundspeed", "--nope"])
        assert exc.value.code == 2

    def test_human_table_six_digits(self, capsys):
        code, out, _ = run(capsys, "soundspeed", "--T", "1")
        assert code == EXIT_OK
        assert "c_inf" in out and "a1" in out


# ----------------------------------------------------------------------
# classify
# ----------------------------------------------------------------------

class TestClassify:
    def test_supersonic_incoming_no_conditions(self, capsys):
        u1 = -2.0 * sound_speed(1.0, 1.0)
        code, rec, _ = run_json(
            capsys, "classify", "--u1", repr(u1), "--json")
        assert code == EXIT_OK
        assert rec["n_plus"] == 0
        assert rec["mach"] == pytest.approx(-2.0, rel=1e-12)
        assert len(rec["lambda"]) == 5
        assert rec["lambda"] == sorted(rec["lambda"])
        assert rec["eigen_check"] <= 1e-10

    def test_condition_counts_across_regimes(self, capsys):
        cs = sound_speed(1.0, 1.0)
        for mach, expected in ((-0.5, 1), (0.5, 4), (2.0, 5)):
            code, rec, _ = run_json(
                capsys, "classify", "--u1", repr(mach * cs), "--json")
            assert code == EXIT_OK
            assert rec["n_plus"] == expected

    def test_degenerate_state_exit_code(self, capsys):
        u1 = sound_speed(1.0, 1.0)  # Mach exactly 1
        assert abs(mach_number(u1, 1.0, 1.0) - 1.0) < 1e-12
        code, rec, err = run_json(
            capsys, "classify", "--u1", repr(u1), "--json")
        assert code == EXIT_DEGENERATE
        assert rec["degenerate"] is True
        assert rec["n_plus"] is None
        assert "degenerate" in err


# ----------------------------------------------------------------------
# moments
# ----------------------------------------------------------------------

class TestMoments:
    def test_verified_table_tolerance(self, capsys):
        code, rec, _ = run_json(
            capsys, "moments", "--u1", "0.3", "--T", "0.8",
            "--verify", "--json")
        assert code == EXIT_OK
        assert len(rec["rows"]) == 13
        assert all(r["rel_err"] <= 1e-6 for r in rec["rows"])

    def test_rest_frame_odd_rows_vanish(self, capsys):
        code, rec, _ = run_json(capsys, "moments", "--json")
        assert code == EXIT_OK
        table = {r["kind"]: r["closed_form"] for r in rec["rows"]}
        for kind in ("p1", "p0*p1", "p1*p2", "p1*p2*p3/p0"):
            assert table[kind] == 0.0
        # without --verify the quadrature column stays empty
        assert all(r["quadrature"] is None for r in rec["rows"])

    def test_first_moment_row_equals_drift(self, capsys):
        code, rec, _ = run_json(
            capsys, "moments", "--u1", "0.37", "--c", "2.0", "--json")
        assert code == EXIT_OK
        row = next(r for r in rec["rows"] if r["kind"] == "p1/p0")
        assert row["closed_form"] == pytest.approx(0.37 / 2.0, rel=1e-14)

    def test_human_table_has_13_rows(self, capsys):
        code, out, _ = run(capsys, "moments")
        assert code == EXIT_OK
        assert len(out.strip().splitlines()) == 14  # header + rows

    def test_quadrature_scale_column_positive(self):
        rows = moment_quadrature_table(1.0, 0.2, 1.0, 1.0)
        assert len(rows) == 13
        assert all(scale > 0 for _, _, scale in rows)


# ----------------------------------------------------------------------
# run configuration
# ----------------------------------------------------------------------

TINY_INI = """\
[physical]
T = 1.0
u1 = -0.336

[grid]
Np = 6
p_max = 6.0
Nx = 24

[solver]
substeps = 4

[boundary]
family = {family}
amplitude = {amplitude}

[output]
prefix = {prefix}
"""


class TestConfig:
    def test_defaults_give_mach_minus_two(self):
        cfg = RunConfig().validate()
        assert mach_number(cfg.u1, cfg.T, cfg.c) == pytest.approx(-2.0)

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[grid]\nNq = 4\n")
        with pytest.raises(ConfigError, match=r"\[grid\] Nq"):
            load_config(path)

    def test_unknown_section_named(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[gridd]\nNp = 4\n")
        with pytest.raises(ConfigError, match=r"\[gridd\]"):
            load_config(path)

    def test_bad_number_names_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[physical]\nT = warm\n")
        with pytest.raises(ConfigError, match=r"\[physical\] T"):
            load_config(path)

    @pytest.mark.parametrize("section,line,match", [
        ("physical", "T = -1.0", r"\[physical\] T"),
        ("kernel", "model = hard-sphere", r"\[kernel\] model"),
        ("kernel", "sigma0 = 0.0", r"\[kernel\]"),
        ("grid", "Np = 5", r"\[grid\] Np"),
        ("grid", "Nx = 0", r"\[grid\] Nx"),
        ("grid", "x_max = -2", r"\[grid\] x_max"),
        ("solver", "beta = 1.0", r"\[solver\]"),
        ("solver", "source_order = 3", r"\[solver\]"),
        ("boundary", "family = mode-6", r"\[boundary\] family"),
        ("boundary", "amplitude = -1", r"\[boundary\] amplitude"),
    ])
    def test_validation_names_offending_key(
            self, tmp_path, section, line, match):
        path = tmp_path / "bad.ini"
        path.write_text("[%s]\n%s\n" % (section, line))
        with pytest.raises(ConfigError, match=match):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.ini")

    def test_ini_round_trip_identity(self, tmp_path):
        cfg = dataclasses.replace(
            RunConfig(), T=0.7, u1=-0.25, np_axis=6, nx=12,
            tau=0.21, gamma=0.9, x_max=17.5, amplitude=3e-4,
            family="mode-2").validate()
        path = tmp_path / "cfg.ini"
        path.write_text(config_to_ini(cfg))
        assert load_config(path) == cfg

    def test_blank_values_stay_unset(self, tmp_path):
        path = tmp_path / "cfg.ini"
        path.write_text("[solver]\ntau = \ngamma = auto\n")
        cfg = load_config(path)
        assert cfg.tau is None and cfg.gamma is None


# ----------------------------------------------------------------------
# solve
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One small subsonic solve via the CLI, shared by format checks."""
    root = tmp_path_factory.mktemp("cli-solve")
    cfgpath = root / "run.ini"
    prefix = root / "out"
    cfgpath.write_text(TINY_INI.format(
        family="maxwellian-bump", amplitude="1e-3", prefix=prefix))
    code = main(["solve", "--config", str(cfgpath), "--workers", "2"])
    summary = json.loads((root / "out.json").read_text())
    return code, root, summary


class TestSolve:
    def test_exit_and_summary_schema(self, tiny_run):
        code, _, summary = tiny_run
        assert code == EXIT_OK
        assert summary["schema"] == "relkin/1"
        assert summary["failed"] is False
        for key in ("iterations", "final_residual", "tau_fit", "gamma_fit",
                    "solvability_residual", "decay_law_deviation",
                    "effective_config", "paths"):
            assert key in summary

    def test_csv_format(self, tiny_run):
        _, root, _ = tiny_run
        raw = (root / "out.csv").read_bytes()
        assert b"\r" not in raw  # LF endings only
        rows = list(csv.reader(io.StringIO(raw.decode("utf-8"))))
        assert rows[0][:7] == ["x", "chi_1", "chi_2", "chi_3", "chi_4",
                               "chi_5", "h_sup_beta"]
        assert rows[0][7:] == ["damping_1"]  # one incoming condition
        assert len(rows) - 1 == 24 + 1  # Nx + 1 profile rows
        x = [float(r[0]) for r in rows[1:]]
        assert x[0] == 0.0 and x == sorted(x)

    def test_full_precision_round_trip(self, tiny_run):
        _, root, summary = tiny_run
        rows = list(csv.reader(io.StringIO(
            (root / "out.csv").read_text(encoding="utf-8"))))
        value = float(rows[1][6])
        assert repr(value) == rows[1][6]
        assert summary["tau"] == summary["effective_config"]["solver"]["tau"]

    def test_gamma_fit_matches_configured_gamma(self, tiny_run):
        _, _, summary = tiny_run
        assert summary["n_plus"] == 1
        assert summary["gamma_fit"] == pytest.approx(
            summary["gamma"], rel=0.02)

    def test_residual_within_tolerance(self, tiny_run):
        _, _, summary = tiny_run
        tol = summary["effective_config"]["solver"]["tol"]
        assert summary["final_residual"] <= 10.0 * tol
        assert summary["iterations"]["outer"] <= 20

    def test_effective_config_reloads_identically(self, tiny_run):
        _, root, summary = tiny_run
        eff = load_config(root / "out.ini")
        assert eff.tau == summary["tau"]
        assert eff.gamma == summary["gamma"]
        # writing it again reproduces the same file byte for byte
        assert config_to_ini(eff) == (root / "out.ini").read_text()

    def test_zero_family_all_zero_profile(self, tmp_path, capsys):
        cfgpath = tmp_path / "zero.ini"
        prefix = tmp_path / "zero"
        cfgpath.write_text(TINY_INI.format(
            family="zero", amplitude="0.0", prefix=prefix))
        code, out, _ = run(capsys, "solve", "--config", str(cfgpath),
                           "--workers", "2", "--json")
        assert code == EXIT_OK
        rows = list(csv.reader(io.StringIO(
            (tmp_path / "zero.csv").read_text())))
        values = [float(v) for row in rows[1:] for v in row[1:]]
        assert all(v == 0.0 for v in values)
        summary = json.loads(out)
        assert summary["solvability_residual"] == [0.0] * 5

    def test_divergence_flagged_with_nonzero_exit(self, tmp_path, capsys):
        cfgpath = tmp_path / "big.ini"
        prefix = tmp_path / "big"
        cfgpath.write_text(TINY_INI.format(
            family="maxwellian-bump", amplitude="2.0", prefix=prefix)
            .replace("substeps = 4", "substeps = 4\ntol = 1e-6"))
        code, _, err = run(capsys, "solve", "--config", str(cfgpath),
                           "--workers", "2")
        assert code == EXIT_SOLVE_FAILED
        assert "FAILED" in err
        summary = json.loads((tmp_path / "big.json").read_text())
        assert summary["failed"] is True
        assert "error" in summary

    def test_workers_do_not_change_results(self, tmp_path):
        texts = []
        for workers in ("1", "2"):
            prefix = tmp_path / ("w%s" % workers)
            cfgpath = tmp_path / ("w%s.ini" % workers)
            cfgpath.write_text(TINY_INI.format(
                family="mode-5", amplitude="1e-3", prefix=prefix))
            assert main(["solve", "--config", str(cfgpath),
                         "--workers", workers]) == EXIT_OK
            texts.append((tmp_path / ("w%s.csv" % workers)).read_text())
        assert texts[0] == texts[1]


# ----------------------------------------------------------------------
# verify
# ----------------------------------------------------------------------

class TestVerify:
    def test_lorentz_suite_passes(self, capsys):
        code, out, _ = run(capsys, "verify", "--suite", "lorentz")
        assert code == EXIT_OK
        assert "FAIL" not in out

    def test_fast_suites_json_records(self, capsys):
        for suite in ("moments", "collision", "macro"):
            code, rec, _ = run_json(
                capsys, "verify", "--suite", suite, "--json")
            assert code == EXIT_OK
            assert rec["passed"] is True
            for check in rec["checks"]:
                assert check["suite"] == suite
                assert set(check) >= {"name", "ok", "measured", "bound"}

    def test_injected_fault_detected(self, capsys, monkeypatch):
        monkeypatch.setenv("RELKIN_VERIFY_PERTURB", "1e-3")
        code, rec, _ = run_json(
            capsys, "verify", "--suite", "macro", "--json")
        assert code == EXIT_SUITE_FAILED
        assert rec["passed"] is False
        assert rec["perturbation"] == 1e-3
        failed = {c["name"] for c in rec["checks"] if not c["ok"]}
        assert "bessel-recurrence" in failed

    def test_fault_injection_is_scoped_to_the_run(self, capsys, monkeypatch):
        from scipy import special
        monkeypatch.setenv("RELKIN_VERIFY_PERTURB", "1e-3")
        main(["verify", "--suite", "macro", "--json"])
        capsys.readouterr()
        assert relkin.bessel.special is special

    def test_env_workers_fallback(self, capsys, monkeypatch):
        monkeypatch.setenv("RELKIN_WORKERS", "not-a-number")
        code, _, err = run(capsys, "verify", "--suite", "lorentz")
        assert code == EXIT_CONFIG
        assert "RELKIN_WORKERS" in err

    def test_bad_worker_count_rejected(self, capsys):
        code, _, err = run(capsys, "verify", "--suite", "lorentz",
                           "--workers", "0")
        assert code == EXIT_CONFIG
        assert "--workers" in err
