"""Scalar regulator with a known optimum: solve the discounted Riccati
recursion, then train briefly and watch the learned gain approach it.

The full acceptance run uses 200 iterations; this demo trains 40 to keep the
runtime near a minute while the trend is already visible.

Run:  python3 demos/05_lqr_oracle.py
"""

import numpy as np

from coordigraph.checkpoint import load_checkpoint
from coordigraph.config import make_task, parse_config
from coordigraph.envs import LqrEnvConfig, LqrState, lqr_observe, lqr_riccati
from coordigraph.network import forward
from coordigraph.training import evaluate, train

CONFIG = """\
env.kind = lqr
net.hidden_size = 16
net.vector_channels = 3
net.propagation_steps = 2
net.message_hidden = 8
ppo.epochs = 10
ppo.minibatch_size = 2048
ppo.lr = 0.001
ppo.lr_schedule = constant
ppo.kl_coef = 1.0
run.iterations = 40
run.steps_per_iteration = 2048
run.eval_episodes = 20
run.checkpoint_interval = 20
"""


def fitted_gain(cfg, params):
    task = make_task(cfg)
    xs = np.linspace(-1.0, 1.0, 41)
    mus = np.array([float(forward(params, task.graph, task.frame,
                                  lqr_observe(LqrState(x=float(x), t=0))).action_mu[1])
                    for x in xs])
    return float(np.dot(xs, mus) / np.dot(xs, xs))


def main(out_dir="/tmp/coordigraph_demo_lqr"):
    k, P = lqr_riccati(LqrEnvConfig())
    print(f"Riccati oracle: k* = {k:.6f} (optimal controller u = -k* x), P = {P:.6f}")

    cfg = parse_config(CONFIG)
    res = train(cfg, out_dir, log=lambda line: print("  " + line)
                if "0 " in line[:9] else None)
    _, params, _, _, _ = load_checkpoint(res.checkpoint_path)
    g = fitted_gain(cfg, params)
    print(f"after {res.iterations_run} iterations: fitted gain {g:+.4f} "
          f"(target {-k:+.4f})")
    ev = evaluate(cfg, params)
    print(f"deterministic eval: mean return {ev.mean_return:.4f} over "
          f"{ev.episodes} episodes")


if __name__ == "__main__":
    main()
