"""Joint-tree morphology graphs and the chain builder.

A morphology is a tree of one Root plus actuated Joint nodes. The stored edge
list is the base tree; ``root_skip`` logically adds root<->joint shortcut
edges, and all degree-dependent quantities (neighbor sets, GCN norms) are
computed on that full message edge set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class NodeKind(Enum):
    ROOT = "root"
    JOINT = "joint"


@dataclass
class ShapeDescriptor:
    """Per-node geometric/inertial scalars fed to the message networks."""

    length: float
    mass: float
    kind_onehot: tuple[float, float]
    degree: int = 0

    def __post_init__(self):
        if self.length <= 0.0:
            raise ValueError(f"length must be positive, got {self.length}")
        if self.mass <= 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    def features(self) -> np.ndarray:
        return np.array([self.length, self.mass,
                         self.kind_onehot[0], self.kind_onehot[1],
                         float(self.degree)])


FEATURE_WIDTH = 5


@dataclass
class NodeSpec:
    kind: NodeKind
    shape: ShapeDescriptor
    parent: int | None = None


@dataclass
class MorphologyGraph:
    """Tree of nodes; ``edges`` is the base tree as undirected (u, v) pairs."""

    nodes: list[NodeSpec]
    edges: list[tuple[int, int]]
    root_skip: bool = False

    @property
    def n(self) -> int:
        return len(self.nodes)

    def root_index(self) -> int:
        for i, node in enumerate(self.nodes):
            if node.kind is NodeKind.ROOT:
                return i
        raise ValueError("graph has no root node")

    def message_edges(self) -> list[tuple[int, int]]:
        """Base edges plus root_skip shortcuts, canonicalized and sorted."""
        base = {(min(u, v), max(u, v)) for u, v in self.edges}
        if self.root_skip:
            r = self.root_index()
            for k in range(self.n):
                if k != r:
                    base.add((min(r, k), max(r, k)))
        return sorted(base)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.message_edges():
            deg[u] += 1
            deg[v] += 1
        return deg

    def kinds(self) -> np.ndarray:
        """1.0 where the node is a Joint, 0.0 at the root."""
        return np.array([1.0 if nd.kind is NodeKind.JOINT else 0.0 for nd in self.nodes])

    def shape_features(self) -> np.ndarray:
        return np.stack([nd.shape.features() for nd in self.nodes])


def build_chain(n_links: int, link_length: float = 1.0, link_mass: float = 1.0,
                root_skip: bool = False) -> MorphologyGraph:
    """Root plus a path of ``n_links`` joint nodes."""
    if n_links < 1:
        raise ValueError(f"n_links must be >= 1, got {n_links}")
    nodes = [NodeSpec(NodeKind.ROOT,
                      ShapeDescriptor(link_length, link_mass, (1.0, 0.0)))]
    edges = []
    for k in range(1, n_links + 1):
        nodes.append(NodeSpec(NodeKind.JOINT,
                              ShapeDescriptor(link_length, link_mass, (0.0, 1.0)),
                              parent=k - 1))
        edges.append((k - 1, k))
    g = MorphologyGraph(nodes=nodes, edges=edges, root_skip=root_skip)
    for i, d in enumerate(g.degrees()):
        g.nodes[i].shape.degree = int(d)
    return g


def neighbors(g: MorphologyGraph, i: int) -> list[int]:
    """Sorted neighbor ids over the full message edge set."""
    if not 0 <= i < g.n:
        raise ValueError(f"node {i} out of range for {g.n} nodes")
    out = set()
    for u, v in g.message_edges():
        if u == i:
            out.add(v)
        elif v == i:
            out.add(u)
    return sorted(out)


def gcn_norm(g: MorphologyGraph, u: int, v: int) -> float:
    """Symmetric GCN normalization 1/sqrt(deg(u) * deg(v)) for an existing edge."""
    key = (min(u, v), max(u, v))
    if key not in set(g.message_edges()):
        raise ValueError(f"({u}, {v}) is not an edge of the graph")
    deg = g.degrees()
    return 1.0 / float(np.sqrt(deg[u] * deg[v]))


def directed_edges(g: MorphologyGraph):
    """(receiver, sender, norm) arrays with both directions of every edge.

    Order is deterministic: canonical edges sorted, low-index receiver first.
    """
    recv, send, norm = [], [], []
    deg = g.degrees()
    for u, v in g.message_edges():
        w = 1.0 / float(np.sqrt(deg[u] * deg[v]))
        recv.extend((u, v))
        send.extend((v, u))
        norm.extend((w, w))
    return (np.array(recv, dtype=np.int64), np.array(send, dtype=np.int64),
            np.array(norm, dtype=np.float64))


def validate(g: MorphologyGraph) -> list[str]:
    """Return a list of invariant violations (empty means well-formed)."""
    problems = []
    n = g.n
    roots = [i for i, nd in enumerate(g.nodes) if nd.kind is NodeKind.ROOT]
    if len(roots) != 1:
        problems.append(f"expected exactly one root node, found {len(roots)}")

    seen = set()
    for u, v in g.edges:
        if not (0 <= u < n and 0 <= v < n):
            problems.append(f"edge ({u}, {v}) references a missing node")
            continue
        if u == v:
            problems.append(f"self-loop at node {u}")
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            problems.append(f"duplicate edge ({u}, {v})")
        seen.add(key)

    if len(seen) != n - 1:
        problems.append(f"base edge set has {len(seen)} edges, a tree on {n} nodes needs {n - 1}")
    else:
        # Union-find connectivity; with n-1 distinct edges, connected == acyclic.
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for u, v in seen:
            parent[find(u)] = find(v)
        if len({find(i) for i in range(n)}) != 1:
            problems.append("base edge set is not connected")

    for i, nd in enumerate(g.nodes):
        if nd.parent is not None and not nd.parent < i:
            problems.append(f"node {i} has parent {nd.parent}, expected parent index < node index")

    return problems
