"""Short coordination-training run on the 3-link chain, then a deterministic
evaluation against the untrained baseline.

The acceptance configuration trains 500 iterations x 4096 steps; this demo
uses a small slice of that budget to show the harness end to end.

Run:  python3 demos/06_train_chain.py
"""

from coordigraph.checkpoint import load_checkpoint
from coordigraph.config import parse_config
from coordigraph.training import build_params, evaluate, train
from coordigraph.config import make_task

CONFIG = """\
env.kind = chain
morphology.n_links = 3
net.hidden_size = 32
net.vector_channels = 3
net.propagation_steps = 3
net.message_hidden = 16
ppo.value_coef = 0.05
run.iterations = 15
run.steps_per_iteration = 2048
run.eval_episodes = 10
run.checkpoint_interval = 15
"""


def main(out_dir="/tmp/coordigraph_demo_chain"):
    cfg = parse_config(CONFIG)
    task = make_task(cfg)
    horizon = task.horizon

    untrained = evaluate(cfg, build_params(cfg, task))
    print(f"untrained policy: {untrained.mean_return / horizon:+.4f} reward/step")

    res = train(cfg, out_dir, log=lambda line: print("  " + line))
    _, params, _, _, _ = load_checkpoint(res.checkpoint_path)
    trained = evaluate(cfg, params)
    print(f"trained {res.iterations_run} iterations: "
          f"{trained.mean_return / horizon:+.4f} reward/step "
          f"(improvement {(trained.mean_return - untrained.mean_return) / horizon:+.4f})")


if __name__ == "__main__":
    main()
