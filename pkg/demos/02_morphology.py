"""Morphology graphs: the chain builder, message edges, degree-scaled
aggregation norms, and the root-skip shortcut wiring.

Run:  python3 demos/02_morphology.py
"""

from coordigraph.morphology import build_chain, gcn_norm, neighbors


def describe(graph, label):
    print(f"-- {label}: {graph.n} nodes")
    print("   kinds:", [n.kind.value for n in graph.nodes])
    print("   message edges:", graph.message_edges())
    print("   degrees:", graph.degrees().tolist())
    for u, v in graph.message_edges()[:4]:
        print(f"   gcn_norm({u},{v}) = {gcn_norm(graph, u, v):.6f}")
    print("   neighbors of root:", neighbors(graph, 0))


def main():
    describe(build_chain(3), "chain(3)")
    # root_skip adds root<->joint shortcuts for every non-adjacent joint,
    # shortening the message path from the root to deep links
    describe(build_chain(3, root_skip=True), "chain(3) + root_skip")

    g = build_chain(2)
    print("-- per-node shape features [length, mass, onehot0, onehot1, degree]")
    for i, row in enumerate(g.shape_features()):
        print(f"   node {i}: {row.tolist()}")


if __name__ == "__main__":
    main()
