"""Command-line interface: exit codes, overrides, subcommand plumbing."""

import csv
import os

import pytest

from coordigraph.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, main

TINY = ("env.kind = lqr\n"
        "net.hidden_size = 8\nnet.propagation_steps = 1\nnet.message_hidden = 4\n"
        "ppo.epochs = 2\nppo.minibatch_size = 64\n"
        "run.iterations = 2\nrun.steps_per_iteration = 64\n"
        "run.eval_episodes = 2\nrun.checkpoint_interval = 1\n")


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text(TINY)
    return str(p)


def _train(tmp_path, cfg_file, *extra):
    out = str(tmp_path / "run")
    rc = main(["train", "--config", cfg_file, "--out", out, *extra])
    return rc, out


def test_train_and_files(tmp_path, cfg_file, capsys):
    rc, out = _train(tmp_path, cfg_file)
    assert rc == EXIT_OK
    assert os.path.exists(os.path.join(out, "metrics.csv"))
    assert os.path.exists(os.path.join(out, "checkpoint.ckpt"))
    text = capsys.readouterr().out
    assert "trained 2 iterations" in text


def test_train_override_beats_file(tmp_path, cfg_file):
    rc, out = _train(tmp_path, cfg_file, "--run.iterations=3")
    assert rc == EXIT_OK
    with open(os.path.join(out, "metrics.csv")) as f:
        assert len(list(csv.DictReader(f))) == 3


def test_bad_override_form_is_config_error(tmp_path, cfg_file):
    rc, _ = _train(tmp_path, cfg_file, "--run.iterations", "3")
    assert rc == EXIT_CONFIG


def test_unknown_key_is_config_error(tmp_path, cfg_file):
    rc, _ = _train(tmp_path, cfg_file, "--run.iterationz=3")
    assert rc == EXIT_CONFIG


def test_missing_config_file_is_config_error(tmp_path):
    rc = main(["train", "--config", str(tmp_path / "none.txt"),
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_CONFIG


def test_eval_uses_checkpoint_config(tmp_path, cfg_file, capsys):
    _, out = _train(tmp_path, cfg_file)
    rc = main(["eval", "--checkpoint", os.path.join(out, "checkpoint.ckpt"),
               "--episodes", "3"])
    assert rc == EXIT_OK
    assert "3 episodes" in capsys.readouterr().out


def test_eval_trace_file(tmp_path, cfg_file):
    _, out = _train(tmp_path, cfg_file)
    trace = str(tmp_path / "trace.csv")
    rc = main(["eval", "--checkpoint", os.path.join(out, "checkpoint.ckpt"),
               "--episodes", "1", "--trace", trace])
    assert rc == EXIT_OK
    with open(trace) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 50  # lqr horizon


def test_resume_continues(tmp_path, cfg_file, capsys):
    _, out = _train(tmp_path, cfg_file)
    rc = main(["train", "--resume", os.path.join(out, "checkpoint.ckpt"),
               "--out", out, "--run.iterations=4"])
    assert rc == EXIT_OK
    with open(os.path.join(out, "metrics.csv")) as f:
        rows = list(csv.DictReader(f))
    assert [r["iteration"] for r in rows] == ["1", "2", "3", "4"]


def test_check_equivariance_exit_zero(capsys):
    rc = main(["check-equivariance", "--trials", "2", "--maps", "2",
               "--net.hidden_size=8", "--net.propagation_steps=1",
               "--net.message_hidden=4"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK, out
    assert "[ok  ]" in out and "[FAIL]" not in out


def test_grad_check_exit_zero(capsys):
    rc = main(["grad-check", "--probes", "2",
               "--net.hidden_size=8", "--net.propagation_steps=1",
               "--net.message_hidden=4", "--run.steps_per_iteration=64"])
    out = capsys.readouterr().out
    assert rc == EXIT_OK, out
    assert "worst relative error" in out


def test_grad_check_impossible_tolerance_fails(capsys):
    rc = main(["grad-check", "--probes", "1", "--tolerance", "0",
               "--net.hidden_size=8", "--net.propagation_steps=1",
               "--net.message_hidden=4", "--run.steps_per_iteration=64"])
    assert rc == EXIT_CHECK


def test_plot_writes_dat_and_png(tmp_path, cfg_file):
    _, out = _train(tmp_path, cfg_file)
    dest = str(tmp_path / "plot")
    rc = main(["plot", "--metrics", os.path.join(out, "metrics.csv"),
               "--out", dest])
    assert rc == EXIT_OK
    assert os.path.exists(dest + ".dat")
    assert os.path.exists(dest + ".png")


def test_no_command_is_config_error(capsys):
    assert main([]) == EXIT_CONFIG
