"""Desk-scale control tasks: a planar actuated chain under gravity, and a
scalar linear-quadratic problem with a computable optimum.

Chain conventions: angle 0 means the link points opposite gravity (up),
angles grow clockwise when gravity points down the y axis. Links have unit
inertia and decoupled rotational dynamics except for actuator reaction
torques: joint k's motor applies +tau_k to link k and -tau_k to link k-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .morphology import MorphologyGraph, build_chain
from .network import GravityFrame


@dataclass
class ChainEnvConfig:
    dt: float = 0.02
    damping: float = 0.1
    gravity: float = 9.81
    link_length: float = 1.0
    torque_limit: float = 1.0
    horizon: int = 200
    action_cost: float = 0.001


@dataclass
class ChainState:
    theta: np.ndarray
    omega: np.ndarray
    t: int = 0


def chain_reset(cfg: ChainEnvConfig, n_links: int, rng: np.random.Generator) -> ChainState:
    """Start hanging: every angle near pi, at rest."""
    theta = rng.uniform(np.pi - 0.1, np.pi + 0.1, size=n_links)
    return ChainState(theta=theta, omega=np.zeros(n_links), t=0)


def chain_step(state: ChainState, torques: np.ndarray, cfg: ChainEnvConfig):
    """Semi-implicit Euler step; returns (state', reward, done)."""
    n = state.theta.shape[0]
    tau = np.asarray(torques, dtype=np.float64)
    if tau.shape != (n,):
        raise ValueError(f"expected {n} torques, got shape {tau.shape}")
    if not np.all(np.isfinite(tau)):
        raise ValueError("non-finite torque")
    tau = np.clip(tau, -cfg.torque_limit, cfg.torque_limit)
    reaction = np.zeros(n)
    reaction[:-1] = tau[1:]
    tau_net = tau - reaction
    accel = tau_net - cfg.damping * state.omega - (cfg.gravity / cfg.link_length) * np.sin(state.theta)
    omega = state.omega + cfg.dt * accel
    theta = state.theta + cfg.dt * omega
    reward = float(np.mean(np.cos(theta)) - cfg.action_cost * np.sum(tau * tau))
    t = state.t + 1
    return ChainState(theta=theta, omega=omega, t=t), reward, t >= cfg.horizon


def chain_energy(state: ChainState, cfg: ChainEnvConfig) -> np.ndarray:
    """Per-link energy proxy 0.5 w^2 - (g/L) cos(theta)."""
    return 0.5 * state.omega ** 2 - (cfg.gravity / cfg.link_length) * np.cos(state.theta)


def _link_frames(theta: np.ndarray):
    # Unit direction u(theta) and its angle derivative; up is +y.
    u = np.stack([np.sin(theta), np.cos(theta)], axis=1)
    du = np.stack([np.cos(theta), -np.sin(theta)], axis=1)
    return u, du


def chain_observe(state: ChainState, cfg: ChainEnvConfig) -> np.ndarray:
    """Per-node rows [midpoint xy, direction xy, velocity xy, omega].

    Row 0 is the root: mean midpoint, zero direction, mean velocity, omega 0.
    Positions come from forward kinematics with the root anchored at the
    origin; velocities are the full kinematic midpoint velocities.
    """
    n = state.theta.shape[0]
    L = cfg.link_length
    u, du = _link_frames(state.theta)
    seg_vel = (state.omega[:, None] * du) * L

    mid = np.zeros((n, 2))
    vel = np.zeros((n, 2))
    anchor = np.zeros(2)
    anchor_vel = np.zeros(2)
    for k in range(n):
        mid[k] = anchor + 0.5 * L * u[k]
        vel[k] = anchor_vel + 0.5 * seg_vel[k]
        anchor = anchor + L * u[k]
        anchor_vel = anchor_vel + seg_vel[k]

    obs = np.zeros((n + 1, 7))
    obs[0, 0:2] = mid.mean(axis=0)
    obs[0, 4:6] = vel.mean(axis=0)
    obs[1:, 0:2] = mid
    obs[1:, 2:4] = u
    obs[1:, 4:6] = vel
    obs[1:, 6] = state.omega
    return obs


def reflect_state(state: ChainState) -> ChainState:
    """Mirror through the vertical plane: theta -> -theta, omega -> -omega."""
    return ChainState(theta=-state.theta, omega=-state.omega, t=state.t)


def reflect_obs(obs: np.ndarray) -> np.ndarray:
    """Mirror an observation: negate x components and the angular velocities."""
    out = obs.copy()
    out[:, 0] = -out[:, 0]
    out[:, 2] = -out[:, 2]
    out[:, 4] = -out[:, 4]
    out[:, 6] = -out[:, 6]
    return out


# ------------------------------------------------------------------- LQR


@dataclass
class LqrEnvConfig:
    a: float = 1.0
    b: float = 0.1
    q: float = 1.0
    r: float = 0.1
    gamma: float = 0.99
    horizon: int = 50
    x0_range: float = 1.0


@dataclass
class LqrState:
    x: float
    t: int = 0


def lqr_reset(cfg: LqrEnvConfig, rng: np.random.Generator) -> LqrState:
    return LqrState(x=float(rng.uniform(-cfg.x0_range, cfg.x0_range)), t=0)


def lqr_step(state: LqrState, u: float, cfg: LqrEnvConfig):
    """x' = a x + b u with quadratic cost; returns (state', reward, done)."""
    u = float(u)
    if not math.isfinite(u):
        raise ValueError("non-finite control")
    reward = -(cfg.q * state.x * state.x + cfg.r * u * u)
    x = cfg.a * state.x + cfg.b * u
    t = state.t + 1
    return LqrState(x=x, t=t), reward, t >= cfg.horizon


def lqr_riccati(cfg: LqrEnvConfig, tol: float = 1e-12, max_iter: int = 100000):
    """Fixed point of the discounted scalar Riccati recursion; returns (k, P)."""
    a, b, q, r, g = cfg.a, cfg.b, cfg.q, cfg.r, cfg.gamma
    P = q
    for _ in range(max_iter):
        nxt = q + g * a * a * P - (g * a * b * P) ** 2 / (r + g * b * b * P)
        if abs(nxt - P) < tol:
            P = nxt
            break
        P = nxt
    k = g * a * b * P / (r + g * b * b * P)
    return float(k), float(P)


def lqr_optimal_gain(cfg: LqrEnvConfig) -> float:
    """Optimal feedback gain k*; the optimal controller is u = -k* x."""
    return lqr_riccati(cfg)[0]


def lqr_observe(state: LqrState) -> np.ndarray:
    """Two-node observation: anchored root, joint carrying x as a position.

    The joint's direction is the constant up vector so the shared torque
    readout (a 2-D cross product) yields a scalar action proportional to the
    x component of the policy's vector output.
    """
    obs = np.zeros((2, 7))
    obs[1, 0] = state.x
    obs[1, 3] = 1.0
    return obs


# ------------------------------------------------------------------- tasks


@dataclass
class Task:
    """Uniform episode interface used by rollout collection and evaluation."""

    name: str
    graph: MorphologyGraph
    frame: GravityFrame
    horizon: int
    n_actions: int
    reset: Callable[[np.random.Generator], object]
    step: Callable[[object, np.ndarray], tuple]
    observe: Callable[[object], np.ndarray]


DOWN_2D = np.array([0.0, -1.0])


def make_chain_task(cfg: ChainEnvConfig, graph: MorphologyGraph) -> Task:
    n_links = graph.n - 1
    return Task(
        name="chain",
        graph=graph,
        frame=GravityFrame(DOWN_2D.copy()),
        horizon=cfg.horizon,
        n_actions=n_links,
        reset=lambda rng: chain_reset(cfg, n_links, rng),
        step=lambda s, a: chain_step(s, a, cfg),
        observe=lambda s: chain_observe(s, cfg),
    )


def make_lqr_task(cfg: LqrEnvConfig) -> Task:
    graph = build_chain(1)
    return Task(
        name="lqr",
        graph=graph,
        frame=GravityFrame(DOWN_2D.copy()),
        horizon=cfg.horizon,
        n_actions=1,
        reset=lambda rng: lqr_reset(cfg, rng),
        step=lambda s, a: lqr_step(s, float(a[0]), cfg),
        observe=lambda s: lqr_observe(s),
    )
