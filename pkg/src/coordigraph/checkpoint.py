"""Versioned plain-text checkpoints.

Layout (all values little-endian text, floats printed with ``%.17g`` so a
save/load/save cycle is byte-identical):

    coordigraph-checkpoint v1
    iteration = <int>
    lr = <float>
    adam-step = <int>
    config-lines = <k>
    <k canonical config lines>
    tensors = <m>
    tensor <name> <ndim> <dim0> <dim1> ...
    <rows of space-separated values, one line per leading row>
    ...
    end

Network tensors are stored under their parameter names; optimiser moments
under ``adam.m.<name>`` / ``adam.v.<name>``.
"""

from __future__ import annotations

import numpy as np

from .autodiff import AdamState
from .config import RunConfig, net_config, parse_config, render_config
from .network import NetParams

MAGIC = "coordigraph-checkpoint v1"


class CheckpointError(ValueError):
    """Unreadable, truncated, or structurally inconsistent checkpoint."""


def _fmt(x: float) -> str:
    return "%.17g" % x


def _tensor_lines(name: str, arr: np.ndarray) -> list[str]:
    arr = np.asarray(arr, dtype=np.float64)
    dims = " ".join(str(d) for d in arr.shape)
    head = f"tensor {name} {arr.ndim}" + (f" {dims}" if dims else "")
    if arr.ndim <= 1:
        rows = arr.reshape(1, -1)
    else:
        rows = arr.reshape(-1, arr.shape[-1])
    return [head] + [" ".join(_fmt(v) for v in row) for row in rows]


def save_checkpoint(path: str, cfg: RunConfig, params: NetParams,
                    adam: AdamState, iteration: int, lr: float) -> None:
    config_lines = render_config(cfg).splitlines()
    lines = [MAGIC,
             f"iteration = {iteration}",
             f"lr = {_fmt(lr)}",
             f"adam-step = {adam.step}",
             f"config-lines = {len(config_lines)}"]
    lines += config_lines
    names = list(params.tensors)
    lines.append(f"tensors = {3 * len(names)}")
    for name in names:
        lines += _tensor_lines(name, params.tensors[name])
    for name in names:
        lines += _tensor_lines(f"adam.m.{name}", adam.m[name])
    for name in names:
        lines += _tensor_lines(f"adam.v.{name}", adam.v[name])
    lines.append("end")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, lines: list[str]):
        self.lines = lines
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise CheckpointError("unexpected end of checkpoint")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect_kv(self, key: str) -> str:
        line = self.next()
        prefix = f"{key} = "
        if not line.startswith(prefix):
            raise CheckpointError(f"expected '{key} = ...', got {line!r}")
        return line[len(prefix):]


def _read_tensor(r: _Reader) -> tuple[str, np.ndarray]:
    head = r.next().split()
    if len(head) < 3 or head[0] != "tensor":
        raise CheckpointError(f"expected tensor header, got {' '.join(head)!r}")
    name = head[1]
    try:
        ndim = int(head[2])
        shape = tuple(int(d) for d in head[3:])
    except ValueError:
        raise CheckpointError(f"malformed tensor header for {name!r}")
    if len(shape) != ndim:
        raise CheckpointError(f"tensor {name!r}: header lists {len(shape)} dims, declared {ndim}")
    n_rows = 1 if ndim <= 1 else int(np.prod(shape[:-1], dtype=np.int64))
    row_len = 1 if ndim == 0 else shape[-1]
    flat = np.empty(n_rows * row_len, dtype=np.float64)
    for i in range(n_rows):
        parts = r.next().split()
        if len(parts) != row_len:
            raise CheckpointError(
                f"tensor {name!r}: row {i} has {len(parts)} values, expected {row_len}")
        try:
            flat[i * row_len:(i + 1) * row_len] = [float(p) for p in parts]
        except ValueError:
            raise CheckpointError(f"tensor {name!r}: row {i} holds a non-numeric value")
    return name, flat.reshape(shape)


def load_checkpoint(path: str) -> tuple[RunConfig, NetParams, AdamState, int, float]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}")
    r = _Reader(lines)
    if r.next() != MAGIC:
        raise CheckpointError(f"{path} is not a coordigraph checkpoint")
    try:
        iteration = int(r.expect_kv("iteration"))
        lr = float(r.expect_kv("lr"))
        adam_step = int(r.expect_kv("adam-step"))
        n_cfg = int(r.expect_kv("config-lines"))
    except ValueError:
        raise CheckpointError("malformed checkpoint header")
    cfg_text = "\n".join(r.next() for _ in range(n_cfg))
    cfg = parse_config(cfg_text)
    try:
        n_blocks = int(r.expect_kv("tensors"))
    except ValueError:
        raise CheckpointError("malformed tensor count")
    blocks = dict(_read_tensor(r) for _ in range(n_blocks))
    if len(blocks) != n_blocks:
        raise CheckpointError("duplicate tensor names in checkpoint")
    if r.next() != "end":
        raise CheckpointError("missing end marker")

    tensors, m, v = {}, {}, {}
    for name, arr in blocks.items():
        if name.startswith("adam.m."):
            m[name[len("adam.m."):]] = arr
        elif name.startswith("adam.v."):
            v[name[len("adam.v."):]] = arr
        else:
            tensors[name] = arr
    missing = (set(tensors) - set(m)) | (set(tensors) - set(v))
    if missing or set(m) != set(tensors) or set(v) != set(tensors):
        raise CheckpointError("optimiser state does not cover the parameter set")
    for name in tensors:
        if m[name].shape != tensors[name].shape or v[name].shape != tensors[name].shape:
            raise CheckpointError(f"optimiser moment shape mismatch for {name!r}")

    ncfg = net_config(cfg)
    n_nodes = None
    if ncfg.output_head == "separate":
        if "policy.log_std" not in tensors:
            raise CheckpointError("checkpoint lacks policy.log_std")
        n_nodes = int(tensors["policy.log_std"].shape[0])
    params = NetParams(cfg=ncfg, tensors=tensors, n_nodes=n_nodes)
    adam = AdamState(m=m, v=v, step=adam_step)
    return cfg, params, adam, iteration, lr
