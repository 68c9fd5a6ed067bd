"""Tape-based reverse-mode autodiff over dense float64 numpy arrays.

The tape is rebuilt on every forward pass (define-by-run): while a ``Tape`` is
active, each operation appends one record holding the input/output node ids
and a local gradient rule. ``Tape.backward`` walks the records in reverse,
which is already a valid topological order, and accumulates gradients
additively so fan-out works without bookkeeping.

Everything is float64. Elementwise ops require equal shapes or a rank-0
scalar paired with a tensor; there is no implicit broadcasting beyond that.
Tensors are thin views over numpy arrays and are treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """Operand values are outside an operation's domain (e.g. log of <= 0)."""


_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of executed operations for one forward pass.

    Use as a context manager; operations executed inside record themselves
    when any operand lives on this tape. Single-threaded by design. Nested
    tapes are isolated: a tensor may only be used on the tape it was created
    under (or as an off-tape constant anywhere).
    """

    def __init__(self):
        self._records = []
        self._next_id = 0
        self._grads = None

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        assert popped is self
        return False

    def _fresh_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def variable(self, data) -> "Tensor":
        """Register a leaf (trainable) tensor on this tape."""
        arr = _as_array(data)
        return Tensor(arr, tape=self, node_id=self._fresh_id())

    def backward(self, loss: "Tensor") -> None:
        """Populate gradients for every node reachable from the scalar loss."""
        if loss.tape is not self:
            raise ValueError("loss tensor does not belong to this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
        if self._grads is not None:
            raise RuntimeError("tape already consumed by backward(); "
                               "build a new tape for another pass")
        grads = {loss.node_id: np.ones_like(loss.data)}
        for out_id, in_ids, rule in reversed(self._records):
            g = grads.get(out_id)
            if g is None:
                continue
            for nid, part in zip(in_ids, rule(g)):
                if nid is None or part is None:
                    continue
                acc = grads.get(nid)
                grads[nid] = part if acc is None else acc + part
        self._grads = grads
        # The records exist only to drive this sweep. Their backward closures
        # capture forward intermediates and tensors whose own tape handles
        # point back here, so dropping them now breaks the reference cycle and
        # lets ordinary refcounting reclaim each tape as soon as the caller is
        # done with it (cyclic GC is far too slow for multi-GB tapes).
        self._records.clear()

    def grad(self, t: "Tensor") -> np.ndarray:
        """Gradient of the last backward() loss w.r.t. ``t`` (zeros if unreachable)."""
        if self._grads is None:
            raise RuntimeError("backward() has not been called on this tape")
        if t.tape is not self:
            raise ValueError("tensor does not belong to this tape")
        g = self._grads.get(t.node_id)
        return np.zeros_like(t.data) if g is None else g


class Tensor:
    """Dense float64 array plus an optional handle into a Tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape: Tape | None = None, node_id: int | None = None):
        self.data = _as_array(data)
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = "" if self.tape is None else f", node={self.node_id}"
        return f"Tensor(shape={self.data.shape}{tag})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def square(self):
        return square(self)

    def softplus(self):
        return softplus(self)

    def clip(self, lo, hi):
        return clip(self, lo, hi)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], rule) -> Tensor:
    """Wrap a result; append a tape record when recording is active."""
    if not _TAPES:
        return Tensor(out_data)
    tape = _TAPES[-1]
    on_tape = False
    for t in inputs:
        if t.tape is None:
            continue
        if t.tape is not tape:
            raise ValueError("operand belongs to a different tape")
        on_tape = True
    if not on_tape:
        return Tensor(out_data)
    out = Tensor(out_data, tape=tape, node_id=tape._fresh_id())
    in_ids = tuple(t.node_id if t.tape is tape else None for t in inputs)
    tape._records.append((out.node_id, in_ids, rule))
    return out


def _binary_shapes(a: Tensor, b: Tensor, opname: str):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} are neither equal nor scalar/tensor")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Collapse a gradient onto a rank-0 operand."""
    if shape == ():
        return np.asarray(g.sum())
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "add")
    return _record(a.data + b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "sub")
    return _record(a.data - b.data, (a, b),
                   lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return _record(ad * bd, (a, b),
                   lambda g: (_reduce_to(g * bd, a.shape), _reduce_to(g * ad, b.shape)))


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _record(-x.data, (x,), lambda g: (-g,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _record(y, (x,), lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log requires strictly positive operands")
    xd = x.data
    return _record(np.log(xd), (x,), lambda g: (g / xd,))


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _record(xd * xd, (x,), lambda g: (2.0 * xd * g,))


def softplus(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    y = np.maximum(xd, 0.0) + np.log1p(np.exp(-np.abs(xd)))
    sig = np.where(xd >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(xd))),
                   np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))
    return _record(y, (x,), lambda g: (g * sig,))


def minimum(a, b) -> Tensor:
    """Elementwise min; on ties the gradient flows to the first operand."""
    a, b = as_tensor(a), as_tensor(b)
    _binary_shapes(a, b, "minimum")
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)
    return _record(out, (a, b),
                   lambda g: (_reduce_to(g * take_a, a.shape),
                              _reduce_to(g * ~take_a, b.shape)))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero at and beyond the boundaries."""
    if not lo < hi:
        raise ValueError(f"clip requires lo < hi, got [{lo}, {hi}]")
    x = as_tensor(x)
    interior = (x.data > lo) & (x.data < hi)
    return _record(np.clip(x.data, lo, hi), (x,), lambda g: (g * interior,))


# ---------------------------------------------------------------- reductions


def tsum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        return _record(np.asarray(x.data.sum()), (x,),
                       lambda g: (np.full(x.shape, float(g)),))
    ax = _check_axis(x, axis, "sum")
    return _record(x.data.sum(axis=ax), (x,),
                   lambda g: (np.broadcast_to(np.expand_dims(g, ax), x.shape).copy(),))


def tmean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
        return _record(np.asarray(x.data.mean()), (x,),
                       lambda g: (np.full(x.shape, float(g) / n),))
    ax = _check_axis(x, axis, "mean")
    n = x.shape[ax]
    return _record(x.data.mean(axis=ax), (x,),
                   lambda g: (np.broadcast_to(np.expand_dims(g / n, ax), x.shape).copy(),))


def _check_axis(x: Tensor, axis: int, opname: str) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"{opname}: axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def bmm(a, b) -> Tensor:
    """Batched matmul: (B, m, k) @ (B, k, n) -> (B, m, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if (a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0]
            or a.shape[2] != b.shape[1]):
        raise ShapeError(f"bmm: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b),
                   lambda g: (g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g))


def add_rowvec(x, b) -> Tensor:
    """Add a vector to every row slice along the last axis (explicit bias add)."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"add_rowvec: shapes {x.shape} and {b.shape} do not align")
    axes = tuple(range(x.ndim - 1))
    return _record(x.data + b.data, (x, b), lambda g: (g, g.sum(axis=axes)))


# ---------------------------------------------------------------- indexing / layout


def gather(x, index) -> Tensor:
    """Select rows along axis 0; adjoint of scatter_add."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather: index must be 1-D, got shape {idx.shape}")
    if x.ndim < 1 or (idx.size and (idx.min() < 0 or idx.max() >= x.shape[0])):
        raise ShapeError(f"gather: index out of range for shape {x.shape}")

    def rule(g):
        acc = np.zeros_like(x.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _record(x.data[idx], (x,), rule)


def scatter_add(x, index, n: int) -> Tensor:
    """Sum rows of ``x`` into ``n`` output rows as directed by ``index``."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != (x.shape[0],):
        raise ShapeError(f"scatter_add: index shape {idx.shape} does not match {x.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"scatter_add: index out of range for {n} output rows")
    out = np.zeros((n,) + x.shape[1:], dtype=np.float64)
    np.add.at(out, idx, x.data)
    return _record(out, (x,), lambda g: (g[idx],))


def concat(parts, axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: needs at least one operand")
    ax = _check_axis(parts[0], axis, "concat")
    sizes = [p.shape[ax] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=ax))

    return _record(np.concatenate([p.data for p in parts], axis=ax), tuple(parts), rule)


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    x = as_tensor(x)
    ax = _check_axis(x, axis, "narrow")
    if not (0 <= start and start + length <= x.shape[ax]):
        raise ShapeError(f"narrow: [{start}, {start + length}) out of range for shape {x.shape}")
    sl = tuple(slice(None) if i != ax else slice(start, start + length) for i in range(x.ndim))

    def rule(g):
        acc = np.zeros_like(x.data)
        acc[sl] = g
        return (acc,)

    return _record(x.data[sl].copy(), (x,), rule)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape
    return _record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of axes for shape {x.shape}")
    inv = tuple(np.argsort(axes))
    return _record(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


# ---------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    """First/second moment estimates plus the bias-correction step count."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_init(params: dict) -> AdamState:
    return AdamState(m={k: np.zeros_like(p) for k, p in params.items()},
                     v={k: np.zeros_like(p) for k, p in params.items()},
                     step=0)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns (new params, new state)."""
    t = state.step + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * state.m[k] + (1.0 - beta1) * g
        v = beta2 * state.v[k] + (1.0 - beta2) * (g * g)
        new_params[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_grads_by_norm(grads: dict, max_norm: float):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    norm = global_grad_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm
