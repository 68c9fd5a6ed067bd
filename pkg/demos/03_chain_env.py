"""The actuated-chain environment: pinned dynamics values, equilibria, the
reaction-torque coupling between neighboring links, and energy dissipation.

Run:  python3 demos/03_chain_env.py
"""

import math

import numpy as np

from coordigraph.envs import ChainEnvConfig, ChainState, chain_energy, chain_reset, chain_step
from coordigraph.rng import stream


def main():
    cfg = ChainEnvConfig()
    print(f"dt={cfg.dt} damping={cfg.damping} g/L={cfg.gravity / cfg.link_length}"
          f" torque_limit={cfg.torque_limit} horizon={cfg.horizon}")

    # from rest at 90 degrees, one passive step: omega' = -dt * (g/L) * sin(pi/2)
    s = ChainState(theta=np.array([math.pi / 2]), omega=np.zeros(1), t=0)
    s2, r, _ = chain_step(s, np.zeros(1), cfg)
    print(f"one passive step from theta=pi/2: omega' = {s2.omega[0]} (expect -0.1962)")

    # upright is the rewarded equilibrium, hanging the penalized one
    print(f"upright reward = {chain_step(ChainState(np.zeros(1), np.zeros(1), 0), np.zeros(1), cfg)[1]}")
    print(f"hanging reward = {chain_step(ChainState(np.array([math.pi]), np.zeros(1), 0), np.zeros(1), cfg)[1]:.6f}")

    # reaction coupling: actuating joint 2 pushes back on link 1
    s = ChainState(theta=np.zeros(2), omega=np.zeros(2), t=0)
    s2, _, _ = chain_step(s, np.array([0.0, 1.0]), cfg)
    print(f"tau=(0,1): omega' = {s2.omega.tolist()}  (equal and opposite)")

    # unforced trajectories dissipate the energy proxy monotonically
    g = stream(0, "demo-env")
    s = chain_reset(cfg, 3, g)
    e0 = float(chain_energy(s, cfg).sum())
    worst_rise = -np.inf
    for _ in range(300):
        e_prev = float(chain_energy(s, cfg).sum())
        s, _, _ = chain_step(s, np.zeros(3), cfg)
        worst_rise = max(worst_rise, float(chain_energy(s, cfg).sum()) - e_prev)
    print(f"300 unforced steps from reset: energy {e0:.4f} -> "
          f"{float(chain_energy(s, cfg).sum()):.4f}, worst single-step rise {worst_rise:.2e}")


if __name__ == "__main__":
    main()
