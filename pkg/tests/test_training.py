"""Training harness: metrics files, determinism, resume, evaluation."""

import csv
import os

import numpy as np
import pytest

from coordigraph.checkpoint import load_checkpoint
from coordigraph.config import ConfigError, parse_config
from coordigraph.training import METRIC_COLUMNS, evaluate, train

TINY = ("env.kind = lqr\n"
        "net.hidden_size = 8\nnet.propagation_steps = 1\nnet.message_hidden = 4\n"
        "ppo.epochs = 2\nppo.minibatch_size = 64\n"
        "run.iterations = 3\nrun.steps_per_iteration = 64\n"
        "run.eval_episodes = 2\nrun.checkpoint_interval = 2\n")

TINY_CHAIN = TINY.replace("env.kind = lqr", "env.kind = chain") + "morphology.n_links = 2\n"


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def _strip_wall_clock(path):
    with open(path) as f:
        rows = f.read().splitlines()
    idx = rows[0].split(",").index("wall_clock_seconds")
    return ["\x1f".join(v for i, v in enumerate(r.split(",")) if i != idx)
            for r in rows]


def test_train_writes_metrics_and_checkpoint(tmp_path):
    res = train(parse_config(TINY), str(tmp_path / "run"))
    assert res.iterations_run == 3
    rows = _rows(res.metrics_path)
    assert len(rows) == 3
    assert list(rows[0]) == list(METRIC_COLUMNS)
    assert [r["iteration"] for r in rows] == ["1", "2", "3"]
    env_steps = [int(r["env_steps"]) for r in rows]
    assert env_steps == [64, 128, 192]
    assert os.path.exists(res.checkpoint_path)
    _, _, _, it, _ = load_checkpoint(res.checkpoint_path)
    assert it == 3


def test_metrics_byte_identical_across_runs(tmp_path):
    a = train(parse_config(TINY), str(tmp_path / "a"))
    b = train(parse_config(TINY), str(tmp_path / "b"))
    assert _strip_wall_clock(a.metrics_path) == _strip_wall_clock(b.metrics_path)


def test_worker_count_does_not_change_metrics(tmp_path):
    outs = []
    for w in (1, 2, 4):
        cfg = parse_config(TINY + f"run.workers = {w}\n")
        outs.append(train(cfg, str(tmp_path / f"w{w}")))
    base = _strip_wall_clock(outs[0].metrics_path)
    assert _strip_wall_clock(outs[1].metrics_path) == base
    assert _strip_wall_clock(outs[2].metrics_path) == base


def test_seed_changes_metrics(tmp_path):
    a = train(parse_config(TINY), str(tmp_path / "a"))
    b = train(parse_config(TINY + "run.seed = 1\n"), str(tmp_path / "b"))
    assert _strip_wall_clock(a.metrics_path) != _strip_wall_clock(b.metrics_path)


def test_zero_iterations_writes_header_and_initial_checkpoint(tmp_path):
    cfg = parse_config(TINY.replace("run.iterations = 3", "run.iterations = 0"))
    res = train(cfg, str(tmp_path / "z"))
    assert res.iterations_run == 0
    assert _rows(res.metrics_path) == []
    _, _, _, it, _ = load_checkpoint(res.checkpoint_path)
    assert it == 0


def test_resume_continues_iteration_numbering(tmp_path):
    cfg2 = parse_config(TINY.replace("run.iterations = 3", "run.iterations = 2"))
    first = train(cfg2, str(tmp_path / "r"))
    cfg4 = parse_config(TINY.replace("run.iterations = 3", "run.iterations = 4"))
    second = train(cfg4, str(tmp_path / "r"), resume_path=first.checkpoint_path)
    rows = _rows(second.metrics_path)
    assert [r["iteration"] for r in rows] == ["1", "2", "3", "4"]
    assert second.iterations_run == 4


def test_resume_matches_uninterrupted_run(tmp_path):
    whole = train(parse_config(TINY + "run.seed = 5\n"), str(tmp_path / "whole"))
    cfg2 = parse_config(TINY.replace("run.iterations = 3", "run.iterations = 2")
                        + "run.seed = 5\n")
    part = train(cfg2, str(tmp_path / "part"))
    cfg3 = parse_config(TINY + "run.seed = 5\n")
    resumed = train(cfg3, str(tmp_path / "part"), resume_path=part.checkpoint_path)
    _, pw, aw, _, _ = load_checkpoint(whole.checkpoint_path)
    _, pr, ar, _, _ = load_checkpoint(resumed.checkpoint_path)
    for k in pw.tensors:
        assert np.array_equal(pw.tensors[k], pr.tensors[k])
        assert np.array_equal(aw.m[k], ar.m[k])


def test_resume_rejects_changed_frozen_keys(tmp_path):
    first = train(parse_config(TINY), str(tmp_path / "f"))
    changed = parse_config(TINY.replace("net.hidden_size = 8",
                                        "net.hidden_size = 16"))
    with pytest.raises(ConfigError, match="hidden_size"):
        train(changed, str(tmp_path / "f2"), resume_path=first.checkpoint_path)


def test_resume_allows_run_section_changes(tmp_path):
    first = train(parse_config(TINY), str(tmp_path / "g"))
    more = parse_config(TINY.replace("run.iterations = 3", "run.iterations = 5")
                        .replace("run.eval_episodes = 2", "run.eval_episodes = 3"))
    res = train(more, str(tmp_path / "g"), resume_path=first.checkpoint_path)
    assert res.iterations_run == 5


def test_evaluate_deterministic_and_noise_free(tmp_path):
    cfg = parse_config(TINY)
    res = train(cfg, str(tmp_path / "e"))
    _, params, _, _, _ = load_checkpoint(res.checkpoint_path)
    a = evaluate(cfg, params)
    b = evaluate(cfg, params)
    assert a == b
    assert a.episodes == cfg.run.eval_episodes
    one = evaluate(cfg, params, episodes=1)
    assert one.std_return == 0.0


def test_evaluate_seed_parameter(tmp_path):
    cfg = parse_config(TINY)
    res = train(cfg, str(tmp_path / "s"))
    _, params, _, _, _ = load_checkpoint(res.checkpoint_path)
    assert evaluate(cfg, params, seed=1) != evaluate(cfg, params, seed=2)
    assert evaluate(cfg, params, seed=1) == evaluate(cfg, params, seed=1)


def test_evaluate_trace_csv(tmp_path):
    cfg = parse_config(TINY_CHAIN)
    res = train(cfg, str(tmp_path / "t"))
    _, params, _, _, _ = load_checkpoint(res.checkpoint_path)
    trace = tmp_path / "trace.csv"
    evaluate(cfg, params, episodes=2, trace_path=str(trace))
    rows = _rows(str(trace))
    assert len(rows) == 2 * 200
    assert list(rows[0]) == ["episode", "t", "reward", "action_0", "action_1"]
    assert {r["episode"] for r in rows} == {"0", "1"}


def test_chain_training_smoke(tmp_path):
    res = train(parse_config(TINY_CHAIN), str(tmp_path / "c"))
    rows = _rows(res.metrics_path)
    assert len(rows) == 3
    assert all(np.isfinite(float(r["mean_return"])) for r in rows)
