from __future__ import annotations

from review_advisor.cli import build_parser, main
from review_advisor.config import fixture_path


def test_parser_accepts_documented_commands():
    p = build_parser()
    args = p.parse_args(["run", "--config", "c.toml", "--variant", "no-issue-no-eval", "--seed", "3", "--out-dir", "d"])
    assert (args.variant, args.seed, args.out_dir) == ("no-issue-no-eval", 3, "d")
    assert p.parse_args(["report", "--dirs", "a,b"]).dirs == "a,b"
    assert p.parse_args(["judge", "--out-dir", "d", "--backend-script", "s.json"]).backend_script == "s.json"


def test_cli_run_resume_judge_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--fixture", "--out-dir", str(out), "--stop-after", "04"]) == 0
    assert "status=partial" in capsys.readouterr().out
    assert main(["resume", "--out-dir", str(out)]) == 0
    assert "status=complete" in capsys.readouterr().out
    assert main(["judge", "--out-dir", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--dirs", str(out), "--out", str(tmp_path / "cmp")]) == 0
    assert capsys.readouterr().out.startswith("variant,automotive\nfull,")
    assert (tmp_path / "cmp" / "comparison.csv").is_file()


def test_cli_config_with_script_and_errors(tmp_path, capsys):
    cfg = str(fixture_path("fixture_config.toml"))
    assert main(["run", "--config", cfg, "--variant", "vanilla", "--out-dir", str(tmp_path / "v")]) == 0
    assert main(["resume", "--out-dir", str(tmp_path / "missing")]) == 2
    assert main(["run", "--config", cfg, "--variant", "full", "--out-dir", str(tmp_path / "v")]) == 2
    err = capsys.readouterr().err
    assert "variant" in err
