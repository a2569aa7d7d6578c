"""CLI surface: argument wiring, error reporting, and end-to-end runs of
the cheap subcommands."""

import numpy as np
import pytest

from pathforge.cli import build_parser, main
from pathforge.stats import bootstrap_ci


class TestParser:
    def test_subcommands_exist(self):
        parser = build_parser()
        for argv in (
            ["pretrain", "--variant", "expert_only"],
            ["finetune", "--policy", "gnn", "--checkpoint", "x.bin"],
            ["baseline", "--policy", "random", "--scenario", "uniform"],
            ["summarize"],
            ["bootstrap", "1", "2"],
        ):
            parser.parse_args(argv)

    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestMain:
    def test_bootstrap_matches_library(self, capsys):
        assert main(["bootstrap", "1", "2", "3", "--seed", "4"]) == 0
        out = capsys.readouterr().out
        mean, lo, hi = bootstrap_ci([1, 2, 3], rng=np.random.default_rng(4))
        assert out.strip() == f"mean={mean!r} ci_lo={lo!r} ci_hi={hi!r}"

    def test_unknown_policy_exits_2(self, capsys):
        assert main(["baseline", "--policy", "sarsa", "--scenario", "none"]) == 2
        assert "valid" in capsys.readouterr().err

    def test_bad_scenario_exits_2(self, capsys):
        assert main(["baseline", "--policy", "random", "--scenario", "x"]) == 2
        assert "scenario" in capsys.readouterr().err

    def test_summarize_empty_exits_2(self, tmp_path, capsys):
        assert main(["summarize", "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_baseline_run_and_cache(self, tmp_path, capsys):
        argv = [
            "baseline", "--policy", "random", "--scenario", "none",
            "--seeds", "0,1", "--out", str(tmp_path),
        ]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert first.count(" ran ") == 2
        assert main(argv) == 0
        assert capsys.readouterr().out.count(" cached ") == 2
        assert main(["summarize", "--out", str(tmp_path)]) == 0
        assert "random/none" in capsys.readouterr().out

    def test_config_file_overrides(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"scenario": "uniform"}')
        assert main([
            "baseline", "--policy", "random", "--scenario", "none",
            "--seeds", "0", "--out", str(tmp_path), "--config", str(cfg),
        ]) == 0
        assert "uniform" in capsys.readouterr().out
