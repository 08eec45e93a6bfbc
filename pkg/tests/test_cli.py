import csv
import json

import pytest

from sadq.cli import main
from sadq.config import preset
from sadq.trainer import train_run

TINY = [
    "--set", "q.hidden_sizes=[16, 8]", "--set", "q.batch_size=8",
    "--set", "q.target_update_interval=200",
    "--set", "model.hidden_sizes=[16]", "--set", "model.batch_size=8",
    "--set", "schedule.total_steps=400",
    "--set", "schedule.replay_frequency=40",
    "--set", "schedule.eval_interval=200",
    "--set", "schedule.eval_episodes=2",
    "--set", "schedule.eps_decay=200",
    "--set", "schedule.buffer_size=2000",
]

THEORY_FAST = ["--mdps", "2", "--states", "6", "--pairs", "4",
               "--bias-pairs", "2", "--samples", "2000"]


def tiny_train(tmp_path, *extra):
    out = tmp_path / "run"
    argv = ["train", "--preset", "cartpole", *TINY, "--seed", "0",
            "--out", str(out), *extra]
    assert main(argv) == 0
    return out


class TestTrain:
    def test_writes_artifacts(self, tmp_path, capsys):
        out = tiny_train(tmp_path)
        assert (out / "seed0" / "metrics.csv").exists()
        assert (out / "seed0" / "final.ckpt").exists()
        stdout = capsys.readouterr().out
        assert "seed 0:" in stdout and str(out) in stdout

    def test_set_overrides_reach_the_run(self, tmp_path):
        out = tiny_train(tmp_path, "--set", "model.k=3",
                         "--set", "agent.alpha=0.25")
        saved = json.loads((out / "seed0" / "config.json").read_text())
        assert saved["model"]["k"] == 3
        assert saved["agent"]["alpha"] == 0.25

    def test_seed_flag_repeatable(self, tmp_path):
        out = tmp_path / "run"
        argv = ["train", "--preset", "cartpole", *TINY,
                "--seed", "0", "--seed", "1", "--out", str(out)]
        assert main(argv) == 0
        assert (out / "seed0").is_dir() and (out / "seed1").is_dir()

    def test_config_file_run(self, tmp_path):
        cfg_path = tmp_path / "run.toml"
        cfg_path.write_text(
            "[env]\nid = \"cartpole\"\n"
            "[q]\nhidden_sizes = [16, 8]\nbatch_size = 8\n"
            "target_update_interval = 200\n"
            "[model]\nhidden_sizes = [16]\nbatch_size = 8\n"
            "[schedule]\ntotal_steps = 400\nreplay_frequency = 40\n"
            "eval_interval = 200\neval_episodes = 2\neps_decay = 200\n"
            "buffer_size = 2000\nseeds = [0]\n")
        out = tmp_path / "out"
        assert main(["train", "--config", str(cfg_path),
                     "--out", str(out)]) == 0
        assert (out / "seed0" / "metrics.csv").exists()


class TestExitCodes:
    def test_no_command_is_usage_error(self):
        assert main([]) == 1

    def test_missing_config_source(self):
        assert main(["train"]) == 1

    def test_config_and_preset_conflict(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("")
        assert main(["train", "--config", str(cfg),
                     "--preset", "cartpole"]) == 1

    def test_invalid_value_is_config_error(self, capsys):
        assert main(["train", "--preset", "cartpole",
                     "--set", "agent.alpha=2.0"]) == 1
        assert "agent.alpha" in capsys.readouterr().err

    def test_malformed_toml_is_config_error(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[env\nid = cartpole")
        assert main(["train", "--config", str(bad)]) == 1

    def test_missing_config_file_is_run_error(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "nope.toml")]) == 2

    def test_unknown_flag(self):
        assert main(["train", "--preset", "cartpole", "--bogus"]) == 1


class TestVerifyTheory:
    def test_passes_on_default_style_ensemble(self, capsys):
        assert main(["verify-theory", *THEORY_FAST]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_single_action_mdps_fail_variance_check(self, capsys):
        # with one action the aggregated successor value is an independent
        # draw of the same quantity, so the strict bound cannot hold
        assert main(["verify-theory", *THEORY_FAST, "--actions", "1"]) == 3
        assert "variance check: FAIL" in capsys.readouterr().out


class TestEval:
    def test_eval_checkpoint(self, tmp_path, capsys):
        out = tiny_train(tmp_path)
        capsys.readouterr()
        code = main(["eval", "--checkpoint", str(out / "seed0" / "final.ckpt"),
                     "--episodes", "3"])
        assert code == 0
        assert "return_mean=" in capsys.readouterr().out


class TestPlot:
    def test_svg_output(self, tmp_path):
        out = tiny_train(tmp_path)
        svg = tmp_path / "curve.svg"
        code = main(["plot", str(out / "seed0" / "metrics.csv"),
                     "--key", "eval_return_mean", "--out", str(svg)])
        assert code == 0
        assert b"<svg" in svg.read_bytes()

    def test_unknown_key_is_run_error(self, tmp_path):
        out = tiny_train(tmp_path)
        code = main(["plot", str(out / "seed0" / "metrics.csv"),
                     "--key", "not_a_column", "--out",
                     str(tmp_path / "x.svg")])
        assert code == 2


class TestSweep:
    def test_single_cell_matches_plain_run(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        argv = ["sweep", "--preset", "cartpole", *TINY, "--seed", "0",
                "--alpha", "0.7", "--beta", "0.5", "--k", "1",
                "--out", str(out)]
        assert main(argv) == 0
        with open(out / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1 and rows[0]["status"] == "ok"

        cfg = preset("cartpole", q_hidden_sizes=(16, 8), q_batch_size=8,
                     target_update_interval=200, m_hidden_sizes=(16,),
                     m_batch_size=8, total_steps=400, replay_frequency=40,
                     eval_interval=200, eval_episodes=2, eps_decay=200,
                     buffer_size=2000, alpha=0.7, beta=0.5, k=1)
        plain = train_run(cfg)[0]
        assert float(rows[0]["final_eval"]) == plain.final_eval
