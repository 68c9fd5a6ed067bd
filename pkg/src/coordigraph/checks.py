"""Standalone verification suites: symmetry checks and finite-difference grads.

Both run against the network the config describes (sizes and ablation flags
included) with freshly initialized parameters, so they validate architecture
properties rather than any particular training run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tape
from .config import RunConfig, make_task, net_config
from .envs import ChainState, chain_observe, chain_step, reflect_obs, reflect_state
from .morphology import build_chain
from .network import GraphLayout, GravityFrame, NetParams, encode_inputs, forward, init_params
from .ppo import _batch_slice, _loss_on_slice, collect_rollout, compute_advantage, ppo_loss
from .rng import StreamKey
from .training import build_params


@dataclass
class CheckEntry:
    name: str
    observed: float
    threshold: float
    relation: str  # "<=" or ">="
    ok: bool


@dataclass
class CheckReport:
    entries: list
    passed: bool

    def lines(self):
        for e in self.entries:
            mark = "ok  " if e.ok else "FAIL"
            yield f"[{mark}] {e.name}: {e.observed:.3e} (require {e.relation} {e.threshold:.0e})"


def _entry(name: str, observed: float, threshold: float, relation: str) -> CheckEntry:
    ok = observed <= threshold if relation == "<=" else observed >= threshold
    return CheckEntry(name, float(observed), threshold, relation, ok)


def gravity_stabilizer_map(ghat: np.ndarray, rng: np.random.Generator,
                           reflect: bool = False) -> np.ndarray:
    """Random orthogonal map fixing ``ghat``: rotation (or reflection) of its
    orthogonal complement."""
    d = ghat.shape[0]
    basis = np.eye(d)
    basis[:, 0] = ghat
    q, _ = np.linalg.qr(basis)
    if float(q[:, 0] @ ghat) < 0.0:
        q[:, 0] = -q[:, 0]
    block = np.eye(d)
    if d >= 3:
        phi = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(phi), np.sin(phi)
        block[1:3, 1:3] = [[c, s], [s, -c]] if reflect else [[c, -s], [s, c]]
    elif reflect:
        block[1, 1] = -1.0
    return q @ block @ q.T


def gravity_tilting_map(ghat: np.ndarray, angle: float = 0.5) -> np.ndarray:
    """Rotation moving ``ghat`` itself, hence outside the stabilizer."""
    d = ghat.shape[0]
    basis = np.eye(d)
    basis[:, 0] = ghat
    q, _ = np.linalg.qr(basis)
    if float(q[:, 0] @ ghat) < 0.0:
        q[:, 0] = -q[:, 0]
    block = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    block[:2, :2] = [[c, -s], [s, c]]
    return q @ block @ q.T


def _apply_map(obs: np.ndarray, rot: np.ndarray) -> np.ndarray:
    d = rot.shape[0]
    out = obs.copy()
    for k in range(3):
        out[:, k * d:(k + 1) * d] = obs[:, k * d:(k + 1) * d] @ rot.T
    return out


def _random_obs(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    obs = np.zeros((n, 3 * d + 1))
    obs[:, :d] = rng.normal(size=(n, d))
    dirs = rng.normal(size=(n, d))
    obs[:, d:2 * d] = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    obs[:, 2 * d:3 * d] = rng.normal(size=(n, d))
    obs[:, 3 * d] = np.abs(rng.normal(size=n))
    return obs


def check_stabilizer_3d(cfg: RunConfig, inputs: int = 5, maps: int = 4, seed: int = 0):
    """Worst deviations over random 3-D inputs × gravity-fixing orthogonal maps.

    Returns (value_dev, log_std_dev, mu_equivariance_dev, tilt_dev): the first
    three must vanish for a gravity-aware network; the tilt deviation measures
    how strongly a map that moves the gravity axis breaks the symmetry (it
    should be clearly nonzero, proving the symmetry group is exactly the
    stabilizer).
    """
    ncfg = net_config(cfg)
    graph = build_chain(cfg.morphology.n_links, link_length=cfg.chain.link_length,
                        root_skip=cfg.morphology.root_skip)
    key = StreamKey(seed, "equivariance")
    ghat3 = np.array([0.0, 0.0, -1.0])
    frame3 = GravityFrame(ghat3)
    params3 = init_params(ncfg, 3, key.child("params3"), graph)
    dev_val = dev_ls = dev_mu = dev_tilt = 0.0
    for trial in range(inputs):
        rng = key.child("d3", trial).generator()
        obs = _random_obs(graph.n, 3, rng)
        base = forward(params3, graph, frame3, obs)
        for m in range(maps):
            rot = gravity_stabilizer_map(ghat3, rng, reflect=(m % 2 == 1))
            mapped = forward(params3, graph, frame3, _apply_map(obs, rot))
            dev_val = max(dev_val, abs(mapped.value - base.value))
            dev_ls = max(dev_ls, float(np.abs(mapped.log_std - base.log_std).max()))
            if base.mu_vec is not None:
                want = base.mu_vec @ rot.T
                dev_mu = max(dev_mu, float(np.abs(mapped.mu_vec - want).max()))
        tilt = gravity_tilting_map(ghat3)
        tilted = forward(params3, graph, frame3, _apply_map(obs, tilt))
        if base.mu_vec is not None:
            dev_tilt = max(dev_tilt, float(np.abs(tilted.mu_vec - base.mu_vec @ tilt.T).max()))
        else:
            dev_tilt = max(dev_tilt, float(np.abs(tilted.action_mu - base.action_mu).max()))
    return dev_val, dev_ls, dev_mu, dev_tilt


def check_reflection_2d(cfg: RunConfig, draws: int = 5, seed: int = 0):
    """Worst deviations over random (chain state, fresh parameters) draws.

    Returns (torque_antisymmetry, value_invariance, step_commutation,
    observe_commutation): mirroring the world must flip the policy's torques,
    leave its value estimate alone, and commute with both the dynamics
    (with torques negated, rewards equal) and the observation map.
    """
    ncfg = net_config(cfg)
    graph = build_chain(cfg.morphology.n_links, link_length=cfg.chain.link_length,
                        root_skip=cfg.morphology.root_skip)
    key = StreamKey(seed, "reflection")
    frame2 = GravityFrame(np.array([0.0, -1.0]))
    n_links = graph.n - 1
    dev_tau = dev_val = dev_step = dev_obs = 0.0
    for trial in range(draws):
        rng = key.child("d2", trial).generator()
        params2 = init_params(ncfg, 2, key.child("params2", trial), graph)
        state = ChainState(theta=rng.uniform(-np.pi, np.pi, size=n_links),
                           omega=rng.uniform(-6.0, 6.0, size=n_links), t=0)
        obs = chain_observe(state, cfg.chain)
        mirrored = reflect_state(state)
        dev_obs = max(dev_obs, float(np.abs(
            chain_observe(mirrored, cfg.chain) - reflect_obs(obs)).max()))
        torques = rng.uniform(-1.5, 1.5, size=n_links)
        s1, r1, _ = chain_step(state, torques, cfg.chain)
        s2, r2, _ = chain_step(mirrored, -torques, cfg.chain)
        want = reflect_state(s1)
        dev_step = max(dev_step,
                       float(np.abs(s2.theta - want.theta).max()),
                       float(np.abs(s2.omega - want.omega).max()),
                       abs(r1 - r2))
        base = forward(params2, graph, frame2, obs)
        flip = forward(params2, graph, frame2, reflect_obs(obs))
        dev_tau = max(dev_tau, float(np.abs(flip.action_mu + base.action_mu).max()))
        dev_val = max(dev_val, abs(flip.value - base.value))
    return dev_tau, dev_val, dev_step, dev_obs


def check_translation(cfg: RunConfig, trials: int = 5, seed: int = 0) -> float:
    """Worst output change under rigid translation of all observed positions."""
    ncfg = net_config(cfg)
    graph = build_chain(cfg.morphology.n_links, link_length=cfg.chain.link_length,
                        root_skip=cfg.morphology.root_skip)
    key = StreamKey(seed, "translation")
    frame2 = GravityFrame(np.array([0.0, -1.0]))
    params2 = init_params(ncfg, 2, key.child("params"), graph)
    dev = 0.0
    for trial in range(trials):
        rng = key.child("case", trial).generator()
        obs = _random_obs(graph.n, 2, rng)
        base = forward(params2, graph, frame2, obs)
        shifted_obs = obs.copy()
        shifted_obs[:, :2] += rng.normal(size=2)[None, :]
        shifted = forward(params2, graph, frame2, shifted_obs)
        dev = max(dev, abs(shifted.value - base.value),
                  float(np.abs(shifted.action_mu - base.action_mu).max()),
                  float(np.abs(shifted.log_std - base.log_std).max()))
    return dev


def check_equivariance(cfg: RunConfig, trials: int = 5, maps: int = 4,
                       seed: int = 0) -> CheckReport:
    """Symmetry suite for the configured network: 3-D gravity-stabilizer
    invariance/equivariance plus tilt sensitivity, 2-D mirror antisymmetry
    and commutation on real chain states, and translation invariance."""
    ncfg = net_config(cfg)
    dev_val, dev_ls, dev_mu, dev_tilt = check_stabilizer_3d(cfg, trials, maps, seed)
    dev_tau, dev_val2, dev_step, dev_obs = check_reflection_2d(cfg, trials, seed)
    dev_shift = check_translation(cfg, trials, seed)
    entries = [
        _entry("3d value invariance", dev_val, 1e-8, "<="),
        _entry("3d log_std invariance", dev_ls, 1e-8, "<="),
        _entry("3d action equivariance", dev_mu, 1e-8, "<="),
        _entry("3d gravity-tilt sensitivity", dev_tilt, 1e-3, ">="),
        _entry("2d mirror torque antisymmetry", dev_tau, 1e-8, "<="),
        _entry("2d mirror value invariance", dev_val2, 1e-8, "<="),
        _entry("2d mirror/step commutation", dev_step, 1e-12, "<="),
        _entry("2d mirror/observe commutation", dev_obs, 1e-12, "<="),
        _entry("translation invariance", dev_shift, 1e-12, "<="),
    ]
    if not ncfg.subequivariant:
        # The ablated network folds vectors into plain scalars; only the
        # environment-level commutations and translation invariance (positions
        # are centered before the flatten) survive.
        keep = ("2d mirror/step commutation", "2d mirror/observe commutation",
                "translation invariance")
        entries = [e for e in entries if e.name in keep]
    return CheckReport(entries=entries, passed=all(e.ok for e in entries))


def _fd_loss(params: NetParams, task, batch, adv, targets, pcfg,
             name: str, direction: np.ndarray, delta: float) -> float:
    tensors = dict(params.tensors)
    tensors[name] = tensors[name] + delta * direction
    shifted = NetParams(cfg=params.cfg, tensors=tensors, n_nodes=params.n_nodes)
    loss, _ = ppo_loss(shifted, task, batch, adv, pcfg, value_targets=targets)
    return loss


def grad_check(cfg: RunConfig, probes: int = 3, seed: int = 0,
               fd_step: float = 1e-6):
    """Compare tape gradients of the PPO loss against central differences.

    Returns ``(worst_relative_error, per-tensor list)``. Each probe is a
    random unit direction over one parameter tensor, drawn from a named
    stream; the analytic directional derivative is checked against a central
    difference along that direction. Directional probes exercise every entry
    of the tensor at once, and they keep the finite-difference truncation
    error (third-derivative terms, which single-coordinate probes concentrate
    on one entry) far below the comparison tolerance. The same rollout batch
    feeds both the analytic pass and every finite-difference evaluation.
    """
    task = make_task(cfg)
    key = StreamKey(seed, "gradcheck")
    params = build_params(cfg, task)
    steps = min(2 * task.horizon, 64)
    batch = collect_rollout(task, params, steps, key.child("rollout"))
    adv = compute_advantage(batch, cfg.ppo.gamma, cfg.ppo.lam)
    targets = batch.values + adv

    graph, frame = task.graph, task.frame
    T = len(batch)
    layout = GraphLayout(graph, frame, params.cfg, T)
    Hin, Z0 = encode_inputs(batch.obs, graph, frame, params.cfg)
    sel = np.arange(T, dtype=np.int64)
    sl = _batch_slice(batch, Hin, Z0, frame.d, layout.joint_mask, adv, targets, sel)
    with Tape() as tape:
        pt = {k: tape.variable(v) for k, v in params.tensors.items()}
        loss_t, _ = _loss_on_slice(pt, layout, cfg.ppo, sl)
        tape.backward(loss_t)
    grads = {k: tape.grad(t) for k, t in pt.items()}

    worst = 0.0
    table = []
    for name, arr in params.tensors.items():
        rng = key.child("probe", name).generator()
        tensor_worst = 0.0
        for _ in range(probes):
            v = rng.normal(size=arr.shape)
            v /= np.linalg.norm(v)
            analytic = float(np.sum(grads[name] * v))
            up = _fd_loss(params, task, batch, adv, targets, cfg.ppo, name, v, fd_step)
            down = _fd_loss(params, task, batch, adv, targets, cfg.ppo, name, v, -fd_step)
            fd = (up - down) / (2.0 * fd_step)
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1.0)
            tensor_worst = max(tensor_worst, rel)
        table.append((name, tensor_worst))
        worst = max(worst, tensor_worst)
    return worst, table
