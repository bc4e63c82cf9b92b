"""Command-line interface: sub-operations, exit codes, config, determinism."""

import filecmp
import os

import pytest

from twistedhaar import read_fbr1, read_tgs1, read_thc1
from twistedhaar.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, load_config, main


def run(tmp_path, *args, seed=None, mode=None):
    argv = ["--out", str(tmp_path)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    if mode is not None:
        argv += ["--mode", mode]
    return main(argv + list(args))


class TestHaarCommands:
    def test_analyze_then_synthesize(self, tmp_path, capsys):
        assert run(tmp_path, "haar", "analyze", "--res", "3", seed=2) == EXIT_OK
        for i in (1, 2, 3):
            assert (tmp_path / f"haar_system{i}.thc1").exists()
        f = read_tgs1(tmp_path / "haar_input.tgs1")
        assert run(tmp_path, "haar", "synthesize",
                   "--in", str(tmp_path / "haar_system2.thc1")) == EXIT_OK
        g = read_tgs1(tmp_path / "haar_synth.tgs1")
        assert g.equals(f.sub_mean())
        capsys.readouterr()

    def test_analyze_single_system(self, tmp_path, capsys):
        assert run(tmp_path, "haar", "analyze", "--res", "3", "--system", "3") == EXIT_OK
        assert (tmp_path / "haar_system3.thc1").exists()
        assert not (tmp_path / "haar_system1.thc1").exists()
        capsys.readouterr()

    def test_frame_reports_bound_three(self, tmp_path, capsys):
        assert run(tmp_path, "haar", "frame", "--res", "3", seed=4) == EXIT_OK
        text = (tmp_path / "haar_frame.csv").read_text()
        assert "ratio,3" in text.replace(" ", "")
        capsys.readouterr()

    def test_frame_single_system_parseval(self, tmp_path, capsys):
        assert run(tmp_path, "haar", "frame", "--res", "3", "--system", "2") == EXIT_OK
        capsys.readouterr()

    def test_synthesize_requires_input(self, tmp_path, capsys):
        assert run(tmp_path, "haar", "synthesize") == EXIT_USAGE
        capsys.readouterr()


class TestMartCommands:
    def test_expect_diff_square(self, tmp_path, capsys):
        for op, name in (("expect", "mart_expect.tgs1"),
                         ("diff", "mart_diff.tgs1"),
                         ("square", "mart_square_sq.tgs1")):
            assert run(tmp_path, "mart", op, "--res", "3", "--system", "2",
                       "--k", "0,1") == EXIT_OK
            assert (tmp_path / name).exists()
        capsys.readouterr()

    def test_lp_report_with_custom_out(self, tmp_path, capsys):
        target = tmp_path / "ratios.csv"
        assert run(tmp_path, "mart", "lp-report", "--res", "3", "--trials", "2",
                   "--p", "1.5,3", "--out", str(target)) == EXIT_OK
        lines = target.read_text().splitlines()
        assert lines[0] == "system,p,trial,ratio"
        assert len(lines) == 1 + 3 * 2 * 2
        assert (tmp_path / "mart_brackets.csv").exists()
        capsys.readouterr()

    def test_float_mode_rejected_for_exact_reports(self, tmp_path, capsys):
        assert run(tmp_path, "mart", "square", "--res", "3",
                   mode="float") == EXIT_USAGE
        assert "exact" in capsys.readouterr().err

    def test_lp_report_allows_float_mode(self, tmp_path, capsys):
        assert run(tmp_path, "mart", "lp-report", "--res", "3", "--trials", "1",
                   "--p", "2", mode="float") == EXIT_OK
        capsys.readouterr()


class TestShearCommands:
    def test_verify_all_kinds(self, tmp_path, capsys):
        assert run(tmp_path, "shear", "verify") == EXIT_OK
        lines = (tmp_path / "shear_report.csv").read_text().splitlines()
        assert lines[0] == "kind,determinant,bijective,round_trip,isometry"
        assert len(lines) == 4
        capsys.readouterr()

    def test_verify_custom_grid(self, tmp_path, capsys):
        assert run(tmp_path, "shear", "verify", "--kind", "T2",
                   "--grid", "0,2;0,2") == EXIT_OK
        capsys.readouterr()


class TestShardCommands:
    def test_build_writes_region(self, tmp_path, capsys):
        target = tmp_path / "region.fbr"
        assert run(tmp_path, "shards", "build", "--case", "3",
                   "--out", str(target)) == EXIT_OK
        header, region = read_fbr1(target)
        assert region.frame == "t"
        capsys.readouterr()

    def test_verify_partition(self, tmp_path, capsys):
        assert run(tmp_path, "shards", "verify-partition", "--case", "1") == EXIT_OK
        text = (tmp_path / "partition_case1.csv").read_text()
        assert "min_mult,1" in text.replace(" ", "")
        capsys.readouterr()

    def test_verify_partition_window_equals_syntax(self, tmp_path, capsys):
        assert run(tmp_path, "shards", "verify-partition", "--case", "1",
                   "--window=-8,8,-2,2") == EXIT_OK
        capsys.readouterr()

    def test_tube_sigma(self, tmp_path, capsys):
        assert run(tmp_path, "shards", "tube-sigma", "--case", "2",
                   "--profile", "staircase:3") == EXIT_OK
        assert (tmp_path / "tube_case2.csv").exists()
        capsys.readouterr()


class TestNilCommands:
    def test_haar_and_frame(self, tmp_path, capsys):
        # one coefficient file per selected type
        for k in (1, 2, 3):
            assert run(tmp_path, "nil", "haar", "--window", "0,1",
                       "--type", str(k)) == EXIT_OK
            assert (tmp_path / f"nil_type{k}.thc1").exists()
        assert run(tmp_path, "nil", "frame", "--window", "0,1") == EXIT_OK
        text = (tmp_path / "nil_frame.csv").read_text()
        assert "ratio,3" in text.replace(" ", "")
        capsys.readouterr()

    def test_expect_diff_square(self, tmp_path, capsys):
        for op, name in (("expect", "nil_expect.tgs1"),
                         ("diff", "nil_diff.tgs1"),
                         ("square", "nil_square_sq.tgs1")):
            assert run(tmp_path, "nil", op, "--window", "0,1",
                       "--j", "1,1,1") == EXIT_OK
            assert (tmp_path / name).exists()
        capsys.readouterr()

    def test_compare_constants(self, tmp_path, capsys):
        assert run(tmp_path, "nil", "compare", "--case", "1") == EXIT_OK
        lines = (tmp_path / "nil_compare.csv").read_text().splitlines()
        assert lines[0] == "case,j,c_in,c_out,sigma"
        row = lines[1].split(",")
        assert row[0] == "1" and row[2] == "1" and row[3] == "2"
        capsys.readouterr()

    def test_regime_tie_is_usage_error(self, tmp_path, capsys):
        assert run(tmp_path, "nil", "compare", "--case", "1",
                   "--j", "1,1,1") == EXIT_USAGE
        assert "error:" in capsys.readouterr().err

    def test_float_mode_rejected(self, tmp_path, capsys):
        assert run(tmp_path, "--mode", "float", "nil", "frame",
                   "--window", "0,1") == EXIT_USAGE
        capsys.readouterr()


class TestFigures:
    def test_no_render_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["--out", str(a), "figures", "--no-render"]) == EXIT_OK
        assert main(["--out", str(b), "figures", "--no-render"]) == EXIT_OK
        names = sorted(os.listdir(a))
        assert names == sorted(os.listdir(b))
        assert names
        assert not any(n.endswith(".png") for n in names)
        for n in names:
            assert filecmp.cmp(a / n, b / n, shallow=False), n
        capsys.readouterr()


class TestConfig:
    def test_file_values_and_flag_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment line\nseed=5\nres=3\n")
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert main(["--config", str(cfg), "--out", str(a),
                     "haar", "analyze"]) == EXIT_OK
        assert main(["--out", str(b), "--seed", "5",
                     "haar", "analyze", "--res", "3"]) == EXIT_OK
        assert filecmp.cmp(a / "haar_input.tgs1", b / "haar_input.tgs1",
                           shallow=False)
        # explicit flag wins over the file value
        assert main(["--config", str(cfg), "--out", str(c), "--seed", "7",
                     "haar", "analyze"]) == EXIT_OK
        assert not filecmp.cmp(a / "haar_input.tgs1", c / "haar_input.tgs1",
                               shallow=False)
        capsys.readouterr()

    def test_bad_config_line_is_usage_error(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("seed 5\n")
        assert main(["--config", str(cfg), "--out", str(tmp_path),
                     "shear", "verify"]) == EXIT_USAGE
        assert "config error" in capsys.readouterr().err

    def test_missing_config_is_usage_error(self, tmp_path, capsys):
        assert main(["--config", str(tmp_path / "none.cfg"), "--out",
                     str(tmp_path), "shear", "verify"]) == EXIT_USAGE
        capsys.readouterr()

    def test_load_config_parses_values(self, tmp_path):
        cfg = tmp_path / "v.cfg"
        cfg.write_text("law=pm1\ntrials=9\n\n# done\n")
        assert load_config(str(cfg)) == {"law": "pm1", "trials": "9"}


class TestUsageErrors:
    def test_unknown_law(self, tmp_path, capsys):
        assert run(tmp_path, "haar", "analyze", "--res", "3",
                   "--law", "gauss") == EXIT_USAGE
        capsys.readouterr()

    def test_oversized_nil_window(self, tmp_path, capsys):
        assert run(tmp_path, "nil", "frame", "--window", "0,6") == EXIT_USAGE
        capsys.readouterr()

    def test_exit_codes_are_distinct(self):
        assert (EXIT_OK, EXIT_FAIL, EXIT_USAGE) == (0, 1, 2)
