"""Line-oriented run configuration: ``section.key = value`` plus ``#`` comments.

Unknown keys, duplicates, type errors, and out-of-range values are rejected
with the offending line number. ``render_config`` emits the complete canonical
key list in a fixed order so configs embed stably in checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .envs import ChainEnvConfig, LqrEnvConfig, Task, make_chain_task, make_lqr_task
from .morphology import build_chain
from .network import NetConfig
from .ppo import PpoConfig


class ConfigError(ValueError):
    """Malformed, unknown, or out-of-range configuration input."""


@dataclass
class MorphologyConfig:
    n_links: int = 3
    root_skip: bool = False


@dataclass
class RunSection:
    seed: int = 0
    iterations: int = 500
    steps_per_iteration: int = 4096
    eval_episodes: int = 20
    workers: int = 1
    checkpoint_interval: int = 100


@dataclass
class AblationConfig:
    subequivariant: bool = True
    direction_vectors_zeroed: bool = False


@dataclass
class RunConfig:
    env_kind: str = "chain"
    chain: ChainEnvConfig = field(default_factory=ChainEnvConfig)
    lqr: LqrEnvConfig = field(default_factory=LqrEnvConfig)
    morphology: MorphologyConfig = field(default_factory=MorphologyConfig)
    net: NetConfig = field(default_factory=NetConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    run: RunSection = field(default_factory=RunSection)
    ablation: AblationConfig = field(default_factory=AblationConfig)


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


def _unit(x):
    return 0.0 < x <= 1.0


def _unit_closed(x):
    return 0.0 <= x <= 1.0


def _ge1(x):
    return x >= 1


# key -> (section attr, field, type, validator, human-readable constraint)
_SCHEMA = {
    "env.kind": ("env_kind", None, str, lambda v: v in ("chain", "lqr"), "one of chain|lqr"),
    "chain.dt": ("chain", "dt", float, _positive, "> 0"),
    "chain.damping": ("chain", "damping", float, _non_negative, ">= 0"),
    "chain.gravity": ("chain", "gravity", float, _non_negative, ">= 0"),
    "chain.link_length": ("chain", "link_length", float, _positive, "> 0"),
    "chain.torque_limit": ("chain", "torque_limit", float, _positive, "> 0"),
    "chain.horizon": ("chain", "horizon", int, _ge1, ">= 1"),
    "chain.action_cost": ("chain", "action_cost", float, _non_negative, ">= 0"),
    "lqr.a": ("lqr", "a", float, lambda v: True, ""),
    "lqr.b": ("lqr", "b", float, lambda v: v != 0.0, "!= 0"),
    "lqr.q": ("lqr", "q", float, _non_negative, ">= 0"),
    "lqr.r": ("lqr", "r", float, _positive, "> 0"),
    "lqr.gamma": ("lqr", "gamma", float, _unit, "in (0, 1]"),
    "lqr.horizon": ("lqr", "horizon", int, _ge1, ">= 1"),
    "lqr.x0_range": ("lqr", "x0_range", float, _positive, "> 0"),
    "morphology.n_links": ("morphology", "n_links", int, _ge1, ">= 1"),
    "morphology.root_skip": ("morphology", "root_skip", bool, lambda v: True, ""),
    "net.hidden_size": ("net", "hidden_size", int, _ge1, ">= 1"),
    "net.vector_channels": ("net", "vector_channels", int, lambda v: v >= 3, ">= 3"),
    "net.propagation_steps": ("net", "propagation_steps", int, _ge1, ">= 1"),
    "net.message_hidden": ("net", "message_hidden", int, _ge1, ">= 1"),
    "net.output_head": ("net", "output_head", str,
                        lambda v: v in ("shared", "separate"), "one of shared|separate"),
    "ppo.gamma": ("ppo", "gamma", float, _unit, "in (0, 1]"),
    "ppo.lam": ("ppo", "lam", float, _unit_closed, "in [0, 1]"),
    "ppo.clip_eps": ("ppo", "clip_eps", float, _positive, "> 0"),
    "ppo.kl_coef": ("ppo", "kl_coef", float, _non_negative, ">= 0"),
    "ppo.value_coef": ("ppo", "value_coef", float, _non_negative, ">= 0"),
    "ppo.epochs": ("ppo", "epochs", int, _ge1, ">= 1"),
    "ppo.minibatch_size": ("ppo", "minibatch_size", int, _ge1, ">= 1"),
    "ppo.lr": ("ppo", "lr", float, _positive, "> 0"),
    "ppo.lr_schedule": ("ppo", "lr_schedule", str,
                        lambda v: v in ("constant", "adaptive"), "one of constant|adaptive"),
    "ppo.kl_target": ("ppo", "kl_target", float, _positive, "> 0"),
    "ppo.grad_norm_clip": ("ppo", "grad_norm_clip", float, _positive, "> 0"),
    "ppo.normalize_adv": ("ppo", "normalize_adv", bool, lambda v: True, ""),
    "run.seed": ("run", "seed", int, _non_negative, ">= 0"),
    "run.iterations": ("run", "iterations", int, _non_negative, ">= 0"),
    "run.steps_per_iteration": ("run", "steps_per_iteration", int, _ge1, ">= 1"),
    "run.eval_episodes": ("run", "eval_episodes", int, _ge1, ">= 1"),
    "run.workers": ("run", "workers", int, _ge1, ">= 1"),
    "run.checkpoint_interval": ("run", "checkpoint_interval", int, _non_negative, ">= 0"),
    "ablation.subequivariant": ("ablation", "subequivariant", bool, lambda v: True, ""),
    "ablation.direction_vectors_zeroed": ("ablation", "direction_vectors_zeroed",
                                          bool, lambda v: True, ""),
}


def _convert(key: str, raw: str, where: str):
    _, _, typ, check, constraint = _SCHEMA[key]
    raw = raw.strip()
    try:
        if typ is bool:
            if raw not in ("true", "false"):
                raise ValueError
            val = raw == "true"
        elif typ is int:
            val = int(raw)
        elif typ is float:
            val = float(raw)
        else:
            val = raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__} for key '{key}'")
    if not check(val):
        raise ConfigError(f"{where}: value {raw} for key '{key}' must be {constraint}")
    return val


def _assign(cfg: RunConfig, key: str, val):
    attr, fld, _, _, _ = _SCHEMA[key]
    if fld is None:
        setattr(cfg, attr, val)
    else:
        setattr(getattr(cfg, attr), fld, val)


def parse_config(text: str, overrides: list[str] | None = None) -> RunConfig:
    """Defaults, then file lines, then CLI ``key=value`` overrides."""
    cfg = RunConfig()
    seen = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        where = f"line {lineno}"
        if key not in _SCHEMA:
            raise ConfigError(f"{where}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"{where}: duplicate key '{key}' (first set on line {seen[key]})")
        seen[key] = lineno
        _assign(cfg, key, _convert(key, raw, where))
    for i, item in enumerate(overrides or [], start=1):
        if "=" not in item:
            raise ConfigError(f"override {i}: expected key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"override {i}: unknown key '{key}'")
        _assign(cfg, key, _convert(key, raw, f"override {i}"))
    return cfg


def load_config(path: str, overrides: list[str] | None = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}")
    return parse_config(text, overrides)


def _render_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def render_config(cfg: RunConfig) -> str:
    """Canonical full-key rendering; parse(render(cfg)) == cfg."""
    lines = []
    for key, (attr, fld, _, _, _) in _SCHEMA.items():
        obj = getattr(cfg, attr)
        val = obj if fld is None else getattr(obj, fld)
        lines.append(f"{key} = {_render_value(val)}")
    return "\n".join(lines) + "\n"


def net_config(cfg: RunConfig) -> NetConfig:
    """Network config with the ablation switches folded in."""
    return replace(cfg.net,
                   subequivariant=cfg.ablation.subequivariant,
                   direction_vectors_zeroed=cfg.ablation.direction_vectors_zeroed)


def make_task(cfg: RunConfig) -> Task:
    if cfg.env_kind == "chain":
        graph = build_chain(cfg.morphology.n_links,
                            link_length=cfg.chain.link_length,
                            root_skip=cfg.morphology.root_skip)
        return make_chain_task(cfg.chain, graph)
    return make_lqr_task(cfg.lqr)
