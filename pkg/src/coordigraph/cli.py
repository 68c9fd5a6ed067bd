"""Command-line front end.

Subcommands: ``train``, ``eval``, ``check-equivariance``, ``grad-check``,
``plot``. Any extra ``--section.key=value`` flag overrides the matching config
entry (command line beats file beats default).

Exit codes: 0 success, 1 configuration/input error, 2 verification failure,
3 numerical failure during optimisation.
"""

from __future__ import annotations

import argparse
import sys

from .checkpoint import CheckpointError, load_checkpoint
from .checks import check_equivariance, grad_check
from .config import ConfigError, RunConfig, load_config, parse_config, render_config
from .ppo import NumericalError
from .training import evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECK = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); route to exit code 1
        raise ConfigError(message)


def _split_overrides(extras: list[str]) -> list[str]:
    overrides = []
    for item in extras:
        if not (item.startswith("--") and "=" in item):
            raise ConfigError(f"unrecognised argument {item!r} "
                              "(overrides look like --section.key=value)")
        overrides.append(item[2:])
    return overrides


def _build_config(args, extras: list[str]) -> RunConfig:
    overrides = _split_overrides(extras)
    if getattr(args, "config", None):
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _cmd_train(args, extras) -> int:
    if args.resume and not args.config:
        saved_cfg, _, _, _, _ = load_checkpoint(args.resume)
        cfg = parse_config(render_config(saved_cfg), _split_overrides(extras))
    else:
        cfg = _build_config(args, extras)
    log = None if args.quiet else (lambda s: print(s, flush=True))
    result = train(cfg, args.out, resume_path=args.resume, log=log)
    print(f"trained {result.iterations_run} iterations "
          f"(metrics: {result.metrics_path}, checkpoint: {result.checkpoint_path})")
    return EXIT_OK


def _cmd_eval(args, extras) -> int:
    overrides = _split_overrides(extras)
    saved_cfg, params, _, iteration, _ = load_checkpoint(args.checkpoint)
    cfg = parse_config(render_config(saved_cfg), overrides)
    res = evaluate(cfg, params, episodes=args.episodes,
                   trace_path=args.trace, seed=args.seed)
    print(f"checkpoint at iteration {iteration}: {res.episodes} episodes, "
          f"mean return {res.mean_return:.6g}, std {res.std_return:.6g}")
    return EXIT_OK


def _cmd_check_equivariance(args, extras) -> int:
    cfg = _build_config(args, extras)
    report = check_equivariance(cfg, trials=args.trials, maps=args.maps, seed=args.seed)
    for line in report.lines():
        print(line)
    if not report.passed:
        print("equivariance check FAILED")
        return EXIT_CHECK
    print("equivariance check passed")
    return EXIT_OK


def _cmd_grad_check(args, extras) -> int:
    cfg = _build_config(args, extras)
    worst, table = grad_check(cfg, probes=args.probes, seed=args.seed)
    for name, err in table:
        print(f"{name:24s} rel err {err:.3e}")
    print(f"worst relative error: {worst:.3e} (tolerance {args.tolerance:.0e})")
    if worst > args.tolerance:
        print("gradient check FAILED")
        return EXIT_CHECK
    print("gradient check passed")
    return EXIT_OK


def _read_metrics(path: str, column: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ConfigError(f"metrics file {path} is empty")
    header = lines[0].split(",")
    if column not in header or "iteration" not in header:
        raise ConfigError(f"metrics file {path} has no column {column!r}")
    ci, cx = header.index(column), header.index("iteration")
    xs, ys = [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        xs.append(float(cells[cx]))
        ys.append(float(cells[ci]))
    return xs, ys


def _cmd_plot(args, extras) -> int:
    if extras:
        raise ConfigError(f"unrecognised arguments: {' '.join(extras)}")
    xs, ys = _read_metrics(args.metrics, args.column)
    dat_path = args.out + ".dat"
    with open(dat_path, "w", encoding="utf-8") as fh:
        fh.write(f"# iteration {args.column}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{x:g} {y:.9g}\n")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, ys, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel(args.column)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    png_path = args.out + ".png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    print(f"wrote {dat_path} and {png_path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="coordigraph",
                     description="Train and verify gravity-aware graph policies.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run PPO training")
    p_train.add_argument("--config", help="config file (key = value lines)")
    p_train.add_argument("--out", default="runs/run", help="output directory")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    p_train.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint deterministically")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=None,
                        help="eval stream seed (default: the run seed)")
    p_eval.add_argument("--trace", help="write a per-step CSV trace")
    p_eval.set_defaults(fn=_cmd_eval)

    p_eq = sub.add_parser("check-equivariance", help="run the symmetry suite")
    p_eq.add_argument("--config", help="config file")
    p_eq.add_argument("--trials", type=int, default=5)
    p_eq.add_argument("--maps", type=int, default=4,
                      help="gravity-fixing maps per 3-D input")
    p_eq.add_argument("--seed", type=int, default=0)
    p_eq.set_defaults(fn=_cmd_check_equivariance)

    p_gc = sub.add_parser("grad-check", help="finite-difference gradient audit")
    p_gc.add_argument("--config", help="config file")
    p_gc.add_argument("--probes", type=int, default=3)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--tolerance", type=float, default=1e-4)
    p_gc.set_defaults(fn=_cmd_grad_check)

    p_plot = sub.add_parser("plot", help="plot a metrics column")
    p_plot.add_argument("--metrics", required=True, help="metrics.csv path")
    p_plot.add_argument("--out", required=True, help="output prefix (.dat and .png)")
    p_plot.add_argument("--column", default="mean_return")
    p_plot.set_defaults(fn=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        return args.fn(args, extras)
    except (ConfigError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
