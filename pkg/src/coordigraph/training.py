"""Training/evaluation loop: rollouts, updates, metrics CSV, checkpoints.

Metrics rows are flushed as written so a killed run leaves usable output.
Every column except ``wall_clock_seconds`` is a pure function of the config,
so repeated runs produce byte-identical files modulo that one column.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, adam_init
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, make_task, net_config, render_config

# Run-control knobs that may legitimately differ when resuming a checkpoint.
_RESUME_MUTABLE = ("run.iterations", "run.checkpoint_interval",
                   "run.eval_episodes", "run.workers")
from .envs import Task
from .network import NetParams, Tensor, encode_inputs, forward_batch, init_params, torque_readout_t
from .network import GraphLayout
from .ppo import adapt_lr, collect_rollout, episode_returns, ppo_update
from .rng import StreamKey

METRIC_COLUMNS = ("iteration", "env_steps", "mean_return", "std_return", "kl",
                  "clip_frac", "value_loss", "entropy", "lr", "wall_clock_seconds")


@dataclass
class TrainResult:
    metrics_path: str
    checkpoint_path: str
    iterations_run: int
    final_lr: float


@dataclass
class EvalResult:
    """Deterministic evaluation summary; ``returns`` is one float per episode."""

    mean_return: float
    std_return: float
    returns: tuple

    @property
    def episodes(self) -> int:
        return len(self.returns)


def build_params(cfg: RunConfig, task: Task) -> NetParams:
    ncfg = net_config(cfg)
    graph = task.graph if ncfg.output_head == "separate" else None
    return init_params(ncfg, task.frame.d, StreamKey(cfg.run.seed, "init"), graph)


def _frozen_part(cfg: RunConfig) -> str:
    lines = render_config(cfg).splitlines()
    return "\n".join(ln for ln in lines if ln.split(" = ")[0] not in _RESUME_MUTABLE)


def _fmt_cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.9g" % float(x)


def _return_stats(batch) -> tuple[float, float]:
    rets = episode_returns(batch)
    if len(rets) == 0:
        return float(batch.rewards.sum()), 0.0
    return float(rets.mean()), float(rets.std())


def train(cfg: RunConfig, out_dir: str, resume_path: str | None = None,
          log=None) -> TrainResult:
    """Run ``cfg.run.iterations`` PPO iterations, writing metrics and checkpoints.

    With ``resume_path`` the saved parameters, optimiser state, learning rate,
    and iteration counter are restored and the loop continues from there; the
    checkpoint's embedded config must match ``cfg``.
    """
    os.makedirs(out_dir, exist_ok=True)
    task = make_task(cfg)
    seed = cfg.run.seed

    if resume_path is not None:
        saved_cfg, params, adam, start_iter, lr = load_checkpoint(resume_path)
        for saved, asked in zip(_frozen_part(saved_cfg).splitlines(),
                                _frozen_part(cfg).splitlines()):
            if saved != asked:
                raise ConfigError(
                    f"checkpoint config does not match the requested run config: "
                    f"saved '{saved}' vs requested '{asked}' "
                    f"(only run-control keys may change on resume)")
    else:
        params = build_params(cfg, task)
        adam = adam_init(params.tensors)
        start_iter, lr = 0, cfg.ppo.lr

    metrics_path = os.path.join(out_dir, "metrics.csv")
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")
    append = resume_path is not None and os.path.exists(metrics_path)
    mode = "a" if append else "w"

    t0 = time.perf_counter()
    iterations = cfg.run.iterations
    interval = cfg.run.checkpoint_interval
    with open(metrics_path, mode, encoding="utf-8") as fh:
        if not append:
            fh.write(",".join(METRIC_COLUMNS) + "\n")
            fh.flush()
        save_checkpoint(ckpt_path, cfg, params, adam, start_iter, lr)
        for it in range(start_iter + 1, iterations + 1):
            batch = collect_rollout(task, params, cfg.run.steps_per_iteration,
                                    StreamKey(seed, "rollout", it))
            params, adam, stats = ppo_update(params, task, batch, cfg.ppo,
                                             StreamKey(seed, "update", it), adam, lr)
            lr = adapt_lr(lr, stats.kl, cfg.ppo)
            mean_ret, std_ret = _return_stats(batch)
            row = (it, it * cfg.run.steps_per_iteration, mean_ret, std_ret,
                   stats.kl, stats.clip_frac, stats.value_loss, stats.entropy,
                   lr, time.perf_counter() - t0)
            fh.write(",".join(_fmt_cell(x) for x in row) + "\n")
            fh.flush()
            if log is not None:
                log(f"iter {it:4d}  return {mean_ret:10.4f}  kl {stats.kl:.5f}  lr {lr:.2e}")
            if interval > 0 and it % interval == 0:
                save_checkpoint(ckpt_path, cfg, params, adam, it, lr)
        save_checkpoint(ckpt_path, cfg, params, adam, max(iterations, start_iter), lr)
    return TrainResult(metrics_path=metrics_path, checkpoint_path=ckpt_path,
                       iterations_run=max(iterations, start_iter), final_lr=lr)


def rollout_deterministic(task: Task, params: NetParams, episodes: int, key: StreamKey):
    """Noise-free lockstep episodes; returns (returns array, reward matrix, action tensor)."""
    cfg = params.cfg
    graph, frame, horizon = task.graph, task.frame, task.horizon
    n, d = graph.n, frame.d
    layout = GraphLayout(graph, frame, cfg, episodes)
    joint = layout.joint_mask
    states = [task.reset(key.child(e).generator()) for e in range(episodes)]
    pt = {k: Tensor(v) for k, v in params.tensors.items()}
    rewards = np.zeros((episodes, horizon))
    actions_rec = np.zeros((episodes, horizon, int(joint.sum())))
    for t in range(horizon):
        obs = np.stack([task.observe(s) for s in states])
        Hin, Z0 = encode_inputs(obs, graph, frame, cfg)
        action_mu, mu_vec, _, _ = forward_batch(pt, layout, Hin, Z0)
        if cfg.subequivariant:
            dirs = obs[..., d:2 * d].reshape(episodes * n, d)
            action_mu = torque_readout_t(mu_vec, dirs, episodes, n)
        mu = action_mu.data * joint[None, :]
        for e in range(episodes):
            act = mu[e, joint]
            actions_rec[e, t] = act
            states[e], rewards[e, t], _ = task.step(states[e], act)
    return rewards.sum(axis=1), rewards, actions_rec


def evaluate(cfg: RunConfig, params: NetParams, episodes: int | None = None,
             trace_path: str | None = None, seed: int | None = None):
    """Deterministic evaluation under the run's eval stream; returns (mean, std, returns)."""
    task = make_task(cfg)
    n_ep = cfg.run.eval_episodes if episodes is None else episodes
    key = StreamKey(cfg.run.seed if seed is None else seed, "eval")
    returns, rewards, actions = rollout_deterministic(task, params, n_ep, key)
    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            nj = actions.shape[2]
            header = ["episode", "t", "reward"] + [f"action_{k}" for k in range(nj)]
            fh.write(",".join(header) + "\n")
            for e in range(n_ep):
                for t in range(task.horizon):
                    cells = [str(e), str(t), _fmt_cell(rewards[e, t])]
                    cells += [_fmt_cell(a) for a in actions[e, t]]
                    fh.write(",".join(cells) + "\n")
    return EvalResult(mean_return=float(returns.mean()),
                      std_return=float(returns.std()),
                      returns=tuple(float(r) for r in returns))
