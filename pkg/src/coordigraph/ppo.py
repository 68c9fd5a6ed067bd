"""PPO with clipped surrogate, a fixed-coefficient KL penalty, and GAE.

Rollout collection is episode-indexed: episode e of an iteration draws every
random number (reset and exploration noise) from its own labeled stream, so
the assembled batch is a pure function of (params, seed, iteration) and is
identical for any worker count or batching strategy. All live episodes are
advanced in lockstep through one batched network pass per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .envs import Task
from .network import (LOG_2PI, GraphLayout, NetParams, encode_inputs,
                      forward_batch, gaussian_log_prob, torque_readout_t)
from .rng import StreamKey


class NumericalError(RuntimeError):
    """Loss or gradients stopped being finite."""


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    kl_coef: float = 0.01
    value_coef: float = 0.5
    epochs: int = 10
    minibatch_size: int = 256
    lr: float = 3e-4
    lr_schedule: str = "adaptive"
    kl_target: float = 0.01
    grad_norm_clip: float = 0.5
    normalize_adv: bool = True


@dataclass
class RolloutBatch:
    """Time-major transitions, episode-contiguous; the final episode may be
    truncated at the step budget, in which case ``tail_value`` bootstraps it."""

    obs: np.ndarray        # (T, n, 3d+1)
    actions: np.ndarray    # (T, n), root column zero
    rewards: np.ndarray    # (T,)
    dones: np.ndarray      # (T,) bool
    values: np.ndarray     # (T,)
    log_probs: np.ndarray  # (T,)
    mus: np.ndarray        # (T, n) behavior action means
    log_stds: np.ndarray   # (T, n)
    episode_starts: np.ndarray
    tail_value: float = 0.0

    def __len__(self):
        return self.rewards.shape[0]


@dataclass
class UpdateStats:
    kl: float
    clip_frac: float
    value_loss: float
    entropy: float
    loss: float
    grad_norm: float


def _as_key(rng_seed) -> StreamKey:
    if isinstance(rng_seed, StreamKey):
        return rng_seed
    return StreamKey(int(rng_seed))


def collect_rollout(task: Task, params: NetParams, steps: int, rng_seed) -> RolloutBatch:
    """Collect exactly ``steps`` transitions, auto-resetting at episode ends."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    key = _as_key(rng_seed)
    cfg = params.cfg
    graph, frame, horizon = task.graph, task.frame, task.horizon
    n, d = graph.n, frame.d
    n_ep = -(-steps // horizon)
    layout = GraphLayout(graph, frame, cfg, n_ep)
    gens = [key.child(e).generator() for e in range(n_ep)]
    states = [task.reset(g) for g in gens]
    joint = layout.joint_mask
    nj = int(joint.sum())

    pt = {k: Tensor(v) for k, v in params.tensors.items()}
    obs_rec = np.zeros((n_ep, horizon, n, 3 * d + 1))
    act_rec = np.zeros((n_ep, horizon, n))
    rew_rec = np.zeros((n_ep, horizon))
    done_rec = np.zeros((n_ep, horizon), dtype=bool)
    val_rec = np.zeros((n_ep, horizon))
    logp_rec = np.zeros((n_ep, horizon))
    mu_rec = np.zeros((n_ep, horizon, n))
    ls_rec = np.zeros((n_ep, horizon, n))

    for t in range(horizon):
        obs = np.stack([task.observe(s) for s in states])
        Hin, Z0 = encode_inputs(obs, graph, frame, cfg)
        action_mu, mu_vec, log_std, value = forward_batch(pt, layout, Hin, Z0)
        if cfg.subequivariant:
            dirs = obs[..., d:2 * d].reshape(n_ep * n, d)
            action_mu = torque_readout_t(mu_vec, dirs, n_ep, n)
        mu = action_mu.data * joint[None, :]
        ls = log_std.data
        sigma = np.exp(ls)
        eps = np.zeros((n_ep, n))
        for e, g in enumerate(gens):
            eps[e, joint] = g.standard_normal(nj)
        actions = mu + sigma * eps * joint[None, :]
        lp = gaussian_log_prob(mu[:, joint], ls[:, joint], actions[:, joint]).sum(axis=1)

        obs_rec[:, t] = obs
        act_rec[:, t] = actions
        val_rec[:, t] = value.data
        logp_rec[:, t] = lp
        mu_rec[:, t] = mu
        ls_rec[:, t] = ls
        for e in range(n_ep):
            states[e], rew_rec[e, t], done_rec[e, t] = task.step(states[e], actions[e, joint])

    full, rem = divmod(steps, horizon)
    parts = {"obs": obs_rec, "actions": act_rec, "rewards": rew_rec, "dones": done_rec,
             "values": val_rec, "log_probs": logp_rec, "mus": mu_rec, "log_stds": ls_rec}
    out = {}
    for name, arr in parts.items():
        lead = arr[:full].reshape((-1,) + arr.shape[2:])
        if rem:
            lead = np.concatenate([lead, arr[full, :rem]], axis=0)
        out[name] = lead
    tail_value = float(val_rec[full, rem]) if rem else 0.0
    starts = np.arange(0, steps, horizon, dtype=np.int64)
    return RolloutBatch(episode_starts=starts, tail_value=tail_value, **out)


def episode_returns(batch: RolloutBatch) -> np.ndarray:
    """Summed rewards of the episodes that completed inside the batch."""
    totals, acc = [], 0.0
    for r, done in zip(batch.rewards, batch.dones):
        acc += float(r)
        if done:
            totals.append(acc)
            acc = 0.0
    return np.array(totals)


def compute_returns(batch: RolloutBatch, gamma: float) -> np.ndarray:
    """Discounted reward-to-go, reset at terminals, bootstrapped at a truncated tail."""
    T = len(batch)
    out = np.zeros(T)
    run = batch.tail_value
    for t in range(T - 1, -1, -1):
        if batch.dones[t]:
            run = 0.0
        run = batch.rewards[t] + gamma * run
        out[t] = run
    return out


def compute_advantage(batch: RolloutBatch, gamma: float, lam: float) -> np.ndarray:
    """GAE(lambda); lam=1 reproduces Monte-Carlo return minus baseline."""
    T = len(batch)
    adv = np.zeros(T)
    gae = 0.0
    next_value = batch.tail_value
    for t in range(T - 1, -1, -1):
        live = 0.0 if batch.dones[t] else 1.0
        if batch.dones[t]:
            next_value = 0.0
            gae = 0.0
        delta = batch.rewards[t] + gamma * next_value * live - batch.values[t]
        gae = delta + gamma * lam * live * gae
        adv[t] = gae
        next_value = batch.values[t]
    return adv


# ------------------------------------------------------------------ loss


def surrogate_term(ratio: Tensor, adv: Tensor, clip_eps: float) -> Tensor:
    """Clipped-surrogate integrand min(A r, A clip(r, 1-eps, 1+eps))."""
    return ad.minimum(ad.mul(adv, ratio),
                      ad.mul(adv, ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)))


def _loss_on_slice(pt: dict, layout: GraphLayout, cfg: PpoConfig, sl: dict):
    """Loss tensor plus diagnostics for one (mini)batch of timesteps."""
    B, n, d = layout.batch, layout.n, layout.d
    action_mu, mu_vec, log_std, value = forward_batch(pt, layout, sl["Hin"], sl["Z0"])
    if layout.cfg.subequivariant:
        action_mu = torque_readout_t(mu_vec, sl["dirs"], B, n)
    jrows = layout.joint_rows
    nj = jrows.shape[0] // B
    mu_j = ad.reshape(ad.gather(ad.reshape(action_mu, (B * n, 1)), jrows), (B, nj))
    ls_j = ad.reshape(ad.gather(ad.reshape(log_std, (B * n, 1)), jrows), (B, nj))

    a = Tensor(sl["actions_j"])
    diff = ad.sub(a, mu_j)
    inv_var = ad.exp(ad.mul(ls_j, -2.0))
    lp = ad.sub(ad.mul(ad.mul(ad.square(diff), inv_var), -0.5),
                ad.add(ls_j, 0.5 * LOG_2PI))
    logp = ad.tsum(lp, axis=1)
    ratio = ad.exp(ad.sub(logp, Tensor(sl["old_logp"])))
    surr = ad.tmean(surrogate_term(ratio, Tensor(sl["adv"]), cfg.clip_eps))

    # KL(old || new), exact diagonal Gaussians.
    old_mu = Tensor(sl["old_mu_j"])
    old_ls = sl["old_ls_j"]
    var_old = Tensor(np.exp(2.0 * old_ls))
    kl = ad.add(ad.sub(ls_j, Tensor(old_ls)),
                ad.sub(ad.mul(ad.mul(ad.add(var_old, ad.square(ad.sub(old_mu, mu_j))),
                                     inv_var), 0.5), 0.5))
    kl_mean = ad.tmean(ad.tsum(kl, axis=1))

    v_loss = ad.tmean(ad.square(ad.sub(value, Tensor(sl["targets"]))))
    loss = ad.add(ad.add(ad.neg(surr), ad.mul(kl_mean, cfg.kl_coef)),
                  ad.mul(v_loss, cfg.value_coef))
    if not np.isfinite(loss.data):
        raise NumericalError("non-finite PPO loss")
    ratio_d = ratio.data
    stats = {
        "kl": float(kl_mean.data),
        "clip_frac": float(np.mean(np.abs(ratio_d - 1.0) > cfg.clip_eps)),
        "value_loss": float(v_loss.data),
        "entropy": float(np.mean(np.sum(ls_j.data + 0.5 * (LOG_2PI + 1.0), axis=1))),
        "loss": float(loss.data),
    }
    return loss, stats


def _batch_slice(batch: RolloutBatch, Hin, Z0, d: int, joint, adv, targets, sel):
    n = batch.obs.shape[1]
    rows = (sel[:, None] * n + np.arange(n, dtype=np.int64)[None, :]).ravel()
    return {
        "Hin": Hin[rows],
        "Z0": None if Z0 is None else Z0[rows],
        "dirs": batch.obs[sel][..., d:2 * d].reshape(-1, d),
        "actions_j": batch.actions[sel][:, joint],
        "old_logp": batch.log_probs[sel],
        "old_mu_j": batch.mus[sel][:, joint],
        "old_ls_j": batch.log_stds[sel][:, joint],
        "adv": adv[sel],
        "targets": targets[sel],
    }


def ppo_loss(params: NetParams, task: Task, batch: RolloutBatch,
             adv: np.ndarray, cfg: PpoConfig, value_targets: np.ndarray | None = None,
             tape: Tape | None = None):
    """Full-batch PPO loss; returns (loss value, stats). With a live tape the
    loss tensor is returned instead of the float, for backward()."""
    graph, frame = task.graph, task.frame
    T = len(batch)
    layout = GraphLayout(graph, frame, params.cfg, T)
    Hin, Z0 = encode_inputs(batch.obs, graph, frame, params.cfg)
    if value_targets is None:
        value_targets = batch.values + adv
    sel = np.arange(T, dtype=np.int64)
    sl = _batch_slice(batch, Hin, Z0, frame.d, layout.joint_mask, adv, value_targets, sel)
    if tape is not None:
        pt = {k: tape.variable(v) for k, v in params.tensors.items()}
        return _loss_on_slice(pt, layout, cfg, sl)
    pt = {k: Tensor(v) for k, v in params.tensors.items()}
    loss, stats = _loss_on_slice(pt, layout, cfg, sl)
    return float(loss.data), stats


def ppo_update(params: NetParams, task: Task, batch: RolloutBatch, cfg: PpoConfig,
               rng_seed, adam_state: ad.AdamState, lr: float):
    """Epochs of shuffled minibatch Adam steps; returns (params', state', stats).

    Reported statistics average the final epoch's minibatch diagnostics.
    """
    key = _as_key(rng_seed)
    graph, frame = task.graph, task.frame
    d = frame.d
    T = len(batch)
    adv = compute_advantage(batch, cfg.gamma, cfg.lam)
    targets = batch.values + adv
    if cfg.normalize_adv:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    Hin, Z0 = encode_inputs(batch.obs, graph, frame, params.cfg)
    layouts = {}
    joint = GraphLayout(graph, frame, params.cfg, 1).joint_mask
    tensors = params.tensors
    mb = min(cfg.minibatch_size, T)
    last_stats = []
    grad_norm = 0.0
    for epoch in range(cfg.epochs):
        perm = key.child("shuffle", epoch).generator().permutation(T)
        if epoch == cfg.epochs - 1:
            last_stats = []
        for lo in range(0, T, mb):
            sel = np.sort(perm[lo:lo + mb])
            B = sel.shape[0]
            if B not in layouts:
                layouts[B] = GraphLayout(graph, frame, params.cfg, B)
            layout = layouts[B]
            sl = _batch_slice(batch, Hin, Z0, d, joint, adv, targets, sel)
            with Tape() as tape:
                pt = {k: tape.variable(v) for k, v in tensors.items()}
                loss, stats = _loss_on_slice(pt, layout, cfg, sl)
                tape.backward(loss)
            grads = {k: tape.grad(t) for k, t in pt.items()}
            for g in grads.values():
                if not np.all(np.isfinite(g)):
                    raise NumericalError("non-finite gradient in PPO update")
            grads, grad_norm = ad.clip_grads_by_norm(grads, cfg.grad_norm_clip)
            tensors, adam_state = ad.adam_step(tensors, grads, adam_state, lr)
            if epoch == cfg.epochs - 1:
                last_stats.append((B, stats))

    total = sum(b for b, _ in last_stats)
    agg = {k: sum(b * s[k] for b, s in last_stats) / total
           for k in ("kl", "clip_frac", "value_loss", "entropy", "loss")}
    new_params = NetParams(cfg=params.cfg, tensors=tensors, n_nodes=params.n_nodes)
    return new_params, adam_state, UpdateStats(grad_norm=grad_norm, **agg)


def adapt_lr(lr: float, observed_kl: float, cfg: PpoConfig) -> float:
    """Schulman-style adaptive learning rate, clamped to [1e-6, 1e-2]."""
    if cfg.lr_schedule == "constant":
        return lr
    if observed_kl > 2.0 * cfg.kl_target:
        lr = lr / 1.5
    elif observed_kl < cfg.kl_target / 2.0:
        lr = lr * 1.5
    return float(min(max(lr, 1e-6), 1e-2))
