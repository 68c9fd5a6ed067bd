"""Chain and regulator environments: pinned hand values, equilibria, energy
dissipation, mirror commutation, and the Riccati oracle."""

import math

import numpy as np
import pytest

from coordigraph.envs import (ChainEnvConfig, ChainState, LqrEnvConfig, LqrState,
                              chain_energy, chain_observe, chain_reset, chain_step,
                              lqr_observe, lqr_optimal_gain, lqr_reset, lqr_riccati,
                              lqr_step, make_chain_task, make_lqr_task, reflect_obs,
                              reflect_state)
from coordigraph.morphology import build_chain
from coordigraph.rng import stream

CFG = ChainEnvConfig()


def test_hanging_rest_is_fixed_point():
    s = ChainState(theta=np.array([math.pi]), omega=np.zeros(1), t=0)
    s2, r, done = chain_step(s, np.zeros(1), CFG)
    # sin(pi) is ~1e-16 in floats; the state moves by less than 1e-15
    assert abs(s2.theta[0] - math.pi) < 1e-15
    assert abs(s2.omega[0]) < 1e-15
    assert r == pytest.approx(-1.0, abs=1e-15)
    assert not done


def test_upright_rest_is_fixed_point_max_reward():
    s = ChainState(theta=np.zeros(2), omega=np.zeros(2), t=0)
    s2, r, _ = chain_step(s, np.zeros(2), CFG)
    assert np.array_equal(s2.theta, np.zeros(2))
    assert np.array_equal(s2.omega, np.zeros(2))
    assert r == 1.0


def test_single_link_hand_value():
    # pinned: from rest at theta = pi/2, one step of passive dynamics
    s = ChainState(theta=np.array([math.pi / 2]), omega=np.zeros(1), t=0)
    s2, r, _ = chain_step(s, np.zeros(1), CFG)
    assert s2.omega[0] == pytest.approx(-0.1962, abs=1e-15)
    assert s2.theta[0] == pytest.approx(math.pi / 2 + CFG.dt * s2.omega[0], abs=1e-15)


def test_torque_clipping_and_reaction_pairs():
    s = ChainState(theta=np.zeros(2), omega=np.zeros(2), t=0)
    s2, _, _ = chain_step(s, np.array([5.0, 0.0]), CFG)
    # clipped to torque_limit=1; net on link 1 is tau_1 - tau_2 = 1
    assert s2.omega[0] == pytest.approx(CFG.dt * 1.0, abs=1e-15)
    assert s2.omega[1] == 0.0
    s3, _, _ = chain_step(s, np.array([1.0, 1.0]), CFG)
    # reaction cancels on link 1, acts on link 2
    assert s3.omega[0] == 0.0
    assert s3.omega[1] == pytest.approx(CFG.dt * 1.0, abs=1e-15)


def test_action_cost_in_reward():
    s = ChainState(theta=np.zeros(1), omega=np.zeros(1), t=0)
    _, r_free, _ = chain_step(s, np.zeros(1), CFG)
    _, r_used, _ = chain_step(s, np.array([1.0]), CFG)
    assert r_free > r_used
    # cost term is action_cost * sum(tau^2) with the clipped torque
    _, r_big, _ = chain_step(s, np.array([10.0]), CFG)
    assert r_big == pytest.approx(r_used, abs=1e-12)


def test_non_finite_torque_rejected():
    s = ChainState(theta=np.zeros(1), omega=np.zeros(1), t=0)
    with pytest.raises(ValueError):
        chain_step(s, np.array([math.nan]), CFG)


def test_done_at_horizon():
    s = ChainState(theta=np.zeros(1), omega=np.zeros(1), t=CFG.horizon - 1)
    _, _, done = chain_step(s, np.zeros(1), CFG)
    assert done


def test_reset_contract():
    for seed in range(5):
        s = chain_reset(CFG, 3, stream(seed, "reset"))
        assert np.all(np.abs(s.theta - math.pi) <= 0.1)
        assert np.array_equal(s.omega, np.zeros(3))
        assert s.t == 0
    a = chain_reset(CFG, 3, stream(1, "reset"))
    b = chain_reset(CFG, 3, stream(1, "reset"))
    assert np.array_equal(a.theta, b.theta)


def test_energy_never_increases_unforced():
    # damping is the only nonconservative term without torque
    worst = -np.inf
    for trial in range(50):
        g = stream(trial, "energy")
        s = ChainState(theta=g.uniform(-np.pi, np.pi, 2),
                       omega=g.uniform(-6.0, 6.0, 2), t=0)
        e = chain_energy(s, CFG)
        for _ in range(200):
            s, _, _ = chain_step(s, np.zeros(2), CFG)
            e2 = chain_energy(s, CFG)
            worst = max(worst, float(np.max(e2 - e)))
            e = e2
    assert worst <= 1e-6


def test_observation_layout_and_kinematics():
    s = ChainState(theta=np.array([0.0, math.pi / 2]), omega=np.array([1.0, 2.0]), t=0)
    obs = chain_observe(s, CFG)
    assert obs.shape == (3, 7)
    # link 1 points up from origin: midpoint (0, 0.5)
    assert obs[1, :2] == pytest.approx([0.0, 0.5])
    # link 2 starts at (0,1) pointing +x: midpoint (0.5, 1.0)
    assert obs[2, :2] == pytest.approx([0.5, 1.0])
    # directions are unit vectors (sin, cos)
    assert obs[1, 2:4] == pytest.approx([0.0, 1.0])
    assert obs[2, 2:4] == pytest.approx([1.0, 0.0])
    # root row: mean midpoint, zero direction, mean velocity, zero omega
    assert obs[0, :2] == pytest.approx(obs[1:, :2].mean(axis=0))
    assert np.array_equal(obs[0, 2:4], np.zeros(2))
    assert obs[0, 6] == 0.0
    assert obs[1, 6] == 1.0 and obs[2, 6] == 2.0


def test_reflection_commutes_with_step_and_observe():
    for trial in range(50):
        g = stream(trial, "mirror")
        s = ChainState(theta=g.uniform(-np.pi, np.pi, 3),
                       omega=g.uniform(-6.0, 6.0, 3), t=0)
        tau = g.uniform(-1.5, 1.5, 3)
        s1, r1, d1 = chain_step(s, tau, CFG)
        s2, r2, d2 = chain_step(reflect_state(s), -tau, CFG)
        want = reflect_state(s1)
        assert np.max(np.abs(s2.theta - want.theta)) <= 1e-12
        assert np.max(np.abs(s2.omega - want.omega)) <= 1e-12
        assert r1 == pytest.approx(r2, abs=1e-12)
        assert d1 == d2
        assert np.max(np.abs(chain_observe(reflect_state(s), CFG)
                             - reflect_obs(chain_observe(s, CFG)))) <= 1e-12


# ------------------------------------------------------------------ regulator

LCFG = LqrEnvConfig()


def test_lqr_step_hand_value():
    s = LqrState(x=1.0, t=0)
    s2, r, done = lqr_step(s, -2.0, LCFG)
    assert s2.x == pytest.approx(0.8, abs=1e-15)
    assert r == pytest.approx(-1.4, abs=1e-15)
    assert not done


def test_lqr_zero_control_identity():
    s = LqrState(x=0.37, t=0)
    s2, _, _ = lqr_step(s, 0.0, LCFG)
    assert s2.x == s.x


def test_riccati_fixed_point_and_gain():
    k, P = lqr_riccati(LCFG)
    a, b, q, r, g = LCFG.a, LCFG.b, LCFG.q, LCFG.r, LCFG.gamma
    # residual of the discounted Riccati equation (independent algebra)
    resid = q + g * a * a * P - g * g * a * a * b * b * P * P / (r + g * b * b * P) - P
    assert abs(resid) < 1e-10
    assert k == pytest.approx(g * a * b * P / (r + g * b * b * P), abs=1e-12)
    # regression constants frozen from the oracle run
    assert k == pytest.approx(2.659332299054775, abs=1e-9)
    assert P == pytest.approx(3.6593322990544594, abs=1e-9)
    assert lqr_optimal_gain(LCFG) == k


def test_riccati_degenerate_q_zero():
    cfg = LqrEnvConfig(q=0.0)
    k, P = lqr_riccati(cfg)
    assert k == pytest.approx(0.0, abs=1e-12)
    assert P == pytest.approx(0.0, abs=1e-12)


def test_lqr_reset_range_and_determinism():
    for seed in range(5):
        s = lqr_reset(LCFG, stream(seed, "r"))
        assert -LCFG.x0_range <= s.x <= LCFG.x0_range
    assert lqr_reset(LCFG, stream(2, "r")).x == lqr_reset(LCFG, stream(2, "r")).x


def test_lqr_observe_node_layout():
    obs = lqr_observe(LqrState(x=0.6, t=0))
    assert obs.shape == (2, 7)
    assert np.array_equal(obs[0], np.zeros(7))
    assert obs[1, :2] == pytest.approx([0.6, 0.0])
    # constant direction along the vertical: stays inside the gravity stabilizer
    assert obs[1, 2:4] == pytest.approx([0.0, 1.0])


def test_tasks_wire_the_right_pieces():
    t = make_chain_task(CFG, build_chain(3))
    assert t.n_actions == 3 and t.horizon == CFG.horizon
    s = t.reset(stream(0, "t"))
    obs = t.observe(s)
    assert obs.shape == (4, 7)
    t2 = make_lqr_task(LCFG)
    assert t2.n_actions == 1 and t2.graph.n == 2
