"""Subequivariant graph network policy over joint-tree morphologies.

Scalar node states stay invariant and vector channels transform with the
input under every orthogonal map that fixes the gravity direction; gravity
itself is appended as an extra vector column in each message stack, which is
exactly what narrows full O(d) equivariance down to the gravity stabilizer.

Vector channels only ever pass through linear maps whose coefficients are
functions of invariants (Gram matrices of the stacked vectors); scalars may
use arbitrary nonlinearities. The code is dimension-agnostic: d comes from
the gravity frame, and shared-head parameters are reusable across both
spatial dimensions and morphology sizes.

The ablated variant ("traditional graph") reuses the same pipeline with the
geometric vectors flattened into the scalar stack and a plain scalar action
head, so nothing except the network path differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .morphology import FEATURE_WIDTH, MorphologyGraph, directed_edges
from .rng import StreamKey

LOG_2PI = float(np.log(2.0 * np.pi))
N_VEC_INPUTS = 3  # centered position, link direction, midpoint velocity


@dataclass
class GravityFrame:
    """Unit gravity direction defining the symmetry subgroup."""

    g_hat: np.ndarray

    def __post_init__(self):
        self.g_hat = np.asarray(self.g_hat, dtype=np.float64)
        norm = float(np.linalg.norm(self.g_hat))
        if not np.isclose(norm, 1.0, atol=1e-9):
            raise ValueError(f"g_hat must be a unit vector, |g| = {norm}")

    @property
    def d(self) -> int:
        return self.g_hat.shape[0]


@dataclass
class NetConfig:
    hidden_size: int = 256
    vector_channels: int = 3
    propagation_steps: int = 6
    message_hidden: int = 64
    output_head: str = "shared"
    subequivariant: bool = True
    direction_vectors_zeroed: bool = False

    def __post_init__(self):
        if self.hidden_size < 1 or self.message_hidden < 1 or self.propagation_steps < 1:
            raise ValueError("network sizes must be >= 1")
        if self.vector_channels < N_VEC_INPUTS:
            raise ValueError(f"vector_channels must be >= {N_VEC_INPUTS}")
        if self.output_head not in ("shared", "separate"):
            raise ValueError(f"output_head must be 'shared' or 'separate', got {self.output_head!r}")


@dataclass
class NodeFeatures:
    """Scalar states H (n, h) and vector channels Z (n, d, c)."""

    H: np.ndarray
    Z: np.ndarray


@dataclass
class PolicyOutput:
    mu_vec: np.ndarray | None  # (n, d) equivariant action direction, None when ablated
    action_mu: np.ndarray      # (n,) scalar action mean per node (root row is masked)
    log_std: np.ndarray        # (n,)
    value: float
    joint_mask: np.ndarray     # (n,) bool, True at actuated nodes


@dataclass
class NetParams:
    cfg: NetConfig
    tensors: dict
    n_nodes: int | None = None  # baked-in node count for the separate head


def scalar_input_width(cfg: NetConfig, d: int) -> int:
    base = 1 + FEATURE_WIDTH  # |omega| plus shape features
    if cfg.subequivariant:
        return base
    return base + N_VEC_INPUTS * d


def _message_widths(cfg: NetConfig):
    h, c = cfg.hidden_size, cfg.vector_channels
    if cfg.subequivariant:
        w = 2 * c + 1
        return 2 * h + 2 * FEATURE_WIDTH + w * w, h + w * c
    return 2 * h + 2 * FEATURE_WIDTH, h


def init_params(cfg: NetConfig, d: int, key: StreamKey,
                graph: MorphologyGraph | None = None) -> NetParams:
    """Xavier-uniform weights, zero biases, small policy mix, log_std -0.5.

    Each tensor draws from its own named stream, so initialization does not
    depend on construction order. The separate output head bakes in the node
    count and requires ``graph``.
    """
    h, c = cfg.hidden_size, cfg.vector_channels
    if cfg.output_head == "separate":
        if graph is None:
            raise ValueError("separate output head requires the morphology graph")
        n_nodes = graph.n
    else:
        n_nodes = None

    tensors = {}

    def xavier(name, fan_in, fan_out, shape):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = key.child("init", name).generator().uniform(-lim, lim, size=shape)

    def zeros(name, shape):
        tensors[name] = np.zeros(shape)

    e_in = scalar_input_width(cfg, d)
    xavier("embed.W", e_in, h, (e_in, h))
    zeros("embed.b", (h,))
    m_in, m_out = _message_widths(cfg)
    for layer in range(cfg.propagation_steps):
        p = f"layer{layer}"
        xavier(f"{p}.msg.W1", m_in, cfg.message_hidden, (m_in, cfg.message_hidden))
        zeros(f"{p}.msg.b1", (cfg.message_hidden,))
        xavier(f"{p}.msg.W2", cfg.message_hidden, m_out, (cfg.message_hidden, m_out))
        zeros(f"{p}.msg.b2", (m_out,))
        xavier(f"{p}.self.W", h, h, (h, h))
        xavier(f"{p}.update.W", 3 * h, h, (3 * h, h))
        zeros(f"{p}.update.b", (h,))

    mix_width = c if cfg.subequivariant else h
    mix_shape = (mix_width,) if n_nodes is None else (n_nodes, mix_width)
    tensors["policy.mix"] = 0.01 * key.child("init", "policy.mix").generator().standard_normal(mix_shape)
    std_shape = (2,) if n_nodes is None else (n_nodes,)
    tensors["policy.log_std"] = np.full(std_shape, -0.5)

    v_in = h + 2 * c if cfg.subequivariant else h
    xavier("value.W1", v_in, h, (v_in, h))
    zeros("value.b1", (h,))
    xavier("value.W2", h, 1, (h, 1))
    zeros("value.b2", (1,))
    return NetParams(cfg=cfg, tensors=tensors, n_nodes=n_nodes)


# ------------------------------------------------------------------ encoding


def center_vectors(positions: np.ndarray) -> np.ndarray:
    """Subtract the node mean: translation invariance by construction."""
    return positions - positions.mean(axis=-2, keepdims=True)


def split_observation(obs: np.ndarray, d: int):
    """Split per-node rows [position, direction, velocity, omega]."""
    if obs.shape[-1] != 3 * d + 1:
        raise ValueError(f"observation width {obs.shape[-1]} does not match 3*{d}+1")
    return obs[..., 0:d], obs[..., d:2 * d], obs[..., 2 * d:3 * d], obs[..., 3 * d]


def encode_inputs(obs: np.ndarray, graph: MorphologyGraph, frame: GravityFrame,
                  cfg: NetConfig):
    """Observation batch (B, n, 3d+1) -> raw scalar stack and vector channels.

    Returns (Hin (B*n, e_in), Z0 (B*n, d, c) or None). Only the magnitude of
    the angular velocity enters the scalar stack; its sign is carried
    equivariantly by the velocity vectors.
    """
    d = frame.d
    if obs.ndim == 2:
        obs = obs[None]
    B, n = obs.shape[0], obs.shape[1]
    if n != graph.n:
        raise ValueError(f"observation has {n} rows, graph has {graph.n} nodes")
    pos, dirs, vel, omega = split_observation(obs, d)
    pos = center_vectors(pos)
    if cfg.direction_vectors_zeroed:
        dirs = np.zeros_like(dirs)
    shape_feats = np.tile(graph.shape_features(), (B, 1))
    scalars = [np.abs(omega).reshape(B * n, 1), shape_feats]
    if cfg.subequivariant:
        Hin = np.concatenate(scalars, axis=1)
        Z0 = np.zeros((B * n, d, cfg.vector_channels))
        Z0[:, :, 0] = pos.reshape(B * n, d)
        Z0[:, :, 1] = dirs.reshape(B * n, d)
        Z0[:, :, 2] = vel.reshape(B * n, d)
        return Hin, Z0
    flat = [pos.reshape(B * n, d), dirs.reshape(B * n, d), vel.reshape(B * n, d)]
    Hin = np.concatenate(scalars + flat, axis=1)
    return Hin, None


def encode(obs: np.ndarray, graph: MorphologyGraph, frame: GravityFrame,
           params: NetParams) -> NodeFeatures:
    """Initial node features for a single observation (inference path)."""
    Hin, Z0 = encode_inputs(obs, graph, frame, params.cfg)
    t = {k: Tensor(v) for k, v in params.tensors.items()}
    H = ad.tanh(ad.add_rowvec(ad.matmul(Tensor(Hin), t["embed.W"]), t["embed.b"]))
    n = graph.n
    c = params.cfg.vector_channels
    Z = Z0 if Z0 is not None else np.zeros((n, frame.d, c))
    return NodeFeatures(H=H.data, Z=Z.reshape(n, frame.d, c))


# ------------------------------------------------------------------ layout


class GraphLayout:
    """Constant index/feature arrays for running B copies of one graph."""

    def __init__(self, graph: MorphologyGraph, frame: GravityFrame,
                 cfg: NetConfig, batch: int):
        recv, send, norm = directed_edges(graph)
        n, e, d = graph.n, recv.shape[0], frame.d
        offs = (np.arange(batch, dtype=np.int64) * n).repeat(e)
        self.graph, self.frame, self.cfg, self.batch = graph, frame, cfg, batch
        self.n, self.d = n, d
        self.recv = np.tile(recv, batch) + offs
        self.send = np.tile(send, batch) + offs
        norm_t = np.tile(norm, batch)
        feats = graph.shape_features()
        self.s_recv = Tensor(feats[np.tile(recv, batch)])
        self.s_send = Tensor(feats[np.tile(send, batch)])
        h, c = cfg.hidden_size, cfg.vector_channels
        E, N = batch * e, batch * n
        self.N, self.E = N, E
        self.norm_h = Tensor(np.broadcast_to(norm_t[:, None], (E, h)).copy())
        if cfg.subequivariant:
            self.norm_dc = Tensor(np.broadcast_to(norm_t[:, None, None], (E, d, c)).copy())
            self.ghat_col = Tensor(np.broadcast_to(frame.g_hat[None, :, None], (E, d, 1)).copy())
            self.ghat_nodes = Tensor(np.broadcast_to(frame.g_hat[None, :, None], (N, d, c)).copy())
        kinds = graph.kinds()
        self.joint_mask = kinds.astype(bool)
        self.joint_rows = np.nonzero(np.tile(self.joint_mask, batch))[0]
        self.kind_idx = np.tile(np.where(self.joint_mask, 1, 0).astype(np.int64), batch)
        self.node_idx = np.tile(np.arange(n, dtype=np.int64), batch)
        self.hprev0 = Tensor(np.zeros((N, h)))


def _mlp2(x: Tensor, W1, b1, W2, b2) -> Tensor:
    return ad.add_rowvec(ad.matmul(ad.tanh(ad.add_rowvec(ad.matmul(x, W1), b1)), W2), b2)


def forward_batch(pt: dict, layout: GraphLayout, Hin: np.ndarray,
                  Z0: np.ndarray | None):
    """Run the network on B lockstep graph copies.

    ``pt`` maps parameter names to Tensors (tape variables during training,
    plain tensors for inference). Returns tensors (action_mu (B, n),
    mu_vec (N, d) or None, log_std (B, n), value (B,)).
    """
    cfg, B, n, d = layout.cfg, layout.batch, layout.n, layout.d
    h, c = cfg.hidden_size, cfg.vector_channels
    H = ad.tanh(ad.add_rowvec(ad.matmul(Tensor(Hin), pt["embed.W"]), pt["embed.b"]))
    Hprev = layout.hprev0
    Z = Tensor(Z0) if cfg.subequivariant else None

    for layer in range(cfg.propagation_steps):
        p = f"layer{layer}"
        Hi = ad.gather(H, layout.recv)
        Hj = ad.gather(H, layout.send)
        if cfg.subequivariant:
            Zi = ad.gather(Z, layout.recv)
            Zj = ad.gather(Z, layout.send)
            V = ad.concat([Zi, Zj, layout.ghat_col], axis=2)
            S = ad.bmm(ad.transpose(V, (0, 2, 1)), V)
            Sf = ad.reshape(S, (layout.E, (2 * c + 1) ** 2))
            msg_in = ad.concat([Hi, Hj, layout.s_recv, layout.s_send, Sf], axis=1)
        else:
            msg_in = ad.concat([Hi, Hj, layout.s_recv, layout.s_send], axis=1)
        mo = _mlp2(msg_in, pt[f"{p}.msg.W1"], pt[f"{p}.msg.b1"],
                   pt[f"{p}.msg.W2"], pt[f"{p}.msg.b2"])
        if cfg.subequivariant:
            msg_s = ad.narrow(mo, 1, 0, h)
            mix = ad.reshape(ad.narrow(mo, 1, h, (2 * c + 1) * c), (layout.E, 2 * c + 1, c))
            msg_v = ad.mul(ad.bmm(V, mix), layout.norm_dc)
            Z = ad.add(ad.scatter_add(msg_v, layout.recv, layout.N), Z)
        else:
            msg_s = mo
        msg_s = ad.mul(msg_s, layout.norm_h)
        agg = ad.add(ad.scatter_add(msg_s, layout.recv, layout.N), ad.matmul(H, pt[f"{p}.self.W"]))
        Hnew = ad.tanh(ad.add_rowvec(
            ad.matmul(ad.concat([agg, H, Hprev], axis=1), pt[f"{p}.update.W"]),
            pt[f"{p}.update.b"]))
        Hprev, H = H, Hnew

    # Policy head: one equivariant vector channel per node (learned channel
    # mix), then the planar torque readout against the observed link
    # directions; the ablated head maps scalars straight to the action.
    mix = pt["policy.mix"]
    if cfg.subequivariant:
        if mix.ndim == 1:
            mu_vec = ad.reshape(ad.matmul(ad.reshape(Z, (layout.N * d, c)),
                                          ad.reshape(mix, (c, 1))), (layout.N, d))
        else:
            mix_rows = ad.reshape(ad.gather(mix, layout.node_idx), (layout.N, c, 1))
            mu_vec = ad.reshape(ad.bmm(Z, mix_rows), (layout.N, d))
    else:
        if mix.ndim == 1:
            act = ad.matmul(H, ad.reshape(mix, (h, 1)))
        else:
            mix_rows = ad.reshape(ad.gather(mix, layout.node_idx), (layout.N, h, 1))
            act = ad.bmm(ad.reshape(H, (layout.N, 1, h)), mix_rows)
        mu_vec = None
        action_mu = ad.reshape(act, (B, n))

    log_std = ad.reshape(ad.gather(
        pt["policy.log_std"],
        layout.kind_idx if pt["policy.log_std"].shape[0] == 2 else layout.node_idx), (B, n))

    if cfg.subequivariant:
        zz = ad.tsum(ad.square(Z), axis=1)
        zg = ad.tsum(ad.mul(Z, layout.ghat_nodes), axis=1)
        vfeat = ad.concat([H, zz, zg], axis=1)
    else:
        vfeat = H
    pooled = ad.tmean(ad.reshape(vfeat, (B, n, vfeat.shape[1])), axis=1)
    value = ad.reshape(_mlp2(pooled, pt["value.W1"], pt["value.b1"],
                             pt["value.W2"], pt["value.b2"]), (B,))
    if cfg.subequivariant:
        action_mu = None  # filled by the caller via torque readout
    return action_mu, mu_vec, log_std, value


def torque_readout_t(mu_vec: Tensor, dirs: np.ndarray, B: int, n: int) -> Tensor:
    """Tape-friendly planar cross product dir x mu per node -> (B, n)."""
    if mu_vec.shape[1] != 2:
        raise ValueError("torque readout is defined for d = 2 only")
    dx = Tensor(dirs[:, 0:1])
    dy = Tensor(dirs[:, 1:2])
    tau = ad.sub(ad.mul(dx, ad.narrow(mu_vec, 1, 1, 1)),
                 ad.mul(dy, ad.narrow(mu_vec, 1, 0, 1)))
    return ad.reshape(tau, (B, n))


def torque_readout(mu_vec: np.ndarray, link_dirs: np.ndarray) -> np.ndarray:
    """Planar pseudo-scalar torques: cross(dir, mu) per node."""
    mu_vec = np.asarray(mu_vec, dtype=np.float64)
    link_dirs = np.asarray(link_dirs, dtype=np.float64)
    if mu_vec.shape[-1] != 2 or link_dirs.shape != mu_vec.shape:
        raise ValueError(f"torque readout needs matching (n, 2) arrays, "
                         f"got {mu_vec.shape} and {link_dirs.shape}")
    return link_dirs[..., 0] * mu_vec[..., 1] - link_dirs[..., 1] * mu_vec[..., 0]


def forward(params: NetParams, graph: MorphologyGraph, frame: GravityFrame,
            obs: np.ndarray) -> PolicyOutput:
    """Single-observation inference pass."""
    cfg = params.cfg
    if params.n_nodes is not None and params.n_nodes != graph.n:
        raise ValueError(f"separate-head parameters were built for {params.n_nodes} nodes, "
                         f"graph has {graph.n}")
    layout = GraphLayout(graph, frame, cfg, 1)
    Hin, Z0 = encode_inputs(obs, graph, frame, cfg)
    pt = {k: Tensor(v) for k, v in params.tensors.items()}
    action_mu, mu_vec, log_std, value = forward_batch(pt, layout, Hin, Z0)
    if cfg.subequivariant:
        if frame.d == 2:
            dirs = np.asarray(obs, dtype=np.float64).reshape(graph.n, -1)[:, frame.d:2 * frame.d]
            tau = torque_readout(mu_vec.data, dirs)
        else:
            tau = np.zeros(graph.n)
        action = tau
        mu_out = mu_vec.data
    else:
        action = action_mu.data.reshape(graph.n)
        mu_out = None
    return PolicyOutput(mu_vec=mu_out,
                        action_mu=action * layout.joint_mask,
                        log_std=log_std.data.reshape(graph.n),
                        value=float(value.data[0]),
                        joint_mask=layout.joint_mask)


def gaussian_log_prob(mu: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Elementwise diagonal-Gaussian log density (standard negative sign)."""
    z = (actions - mu) * np.exp(-log_std)
    return -0.5 * z * z - log_std - 0.5 * LOG_2PI


def log_prob(out: PolicyOutput, actions: np.ndarray) -> float:
    """Joint log probability of a full action vector; the root row is masked."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != out.action_mu.shape:
        raise ValueError(f"expected {out.action_mu.shape[0]} actions, got shape {actions.shape}")
    lp = gaussian_log_prob(out.action_mu, out.log_std, actions)
    return float(lp[out.joint_mask].sum())
