"""Synthetic graph-classification datasets and canonical test fixtures.

These stand in for standard molecular benchmarks when none is available on
disk: small labeled graphs with structure-determined classes that a two-layer
message-passing model can learn, plus the classic WL failure pair and
structurally-isomorphic-but-differently-labeled fixtures.
"""

from __future__ import annotations

import numpy as np

from .graphs import Dataset, Graph
from .tensor import make_rng


def _one_hot(labels, dim: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    feat = np.zeros((labels.size, dim))
    feat[np.arange(labels.size), labels] = 1.0
    return feat


def cycle_adjacency(n: int) -> np.ndarray:
    adj = np.zeros((n, n))
    for i in range(n):
        adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1.0
    return adj


def path_adjacency(n: int) -> np.ndarray:
    adj = np.zeros((n, n))
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = 1.0
    return adj


def cycle_graph(n: int, labels=None, label: int = 0, feature_dim: int = 2) -> Graph:
    if labels is None:
        labels = [i % 2 for i in range(n)]
    return Graph(adjacency=cycle_adjacency(n), features=_one_hot(labels, feature_dim), label=label)


def path_graph(n: int, labels=None, label: int = 1, feature_dim: int = 2) -> Graph:
    if labels is None:
        labels = [i % 2 for i in range(n)]
    return Graph(adjacency=path_adjacency(n), features=_one_hot(labels, feature_dim), label=label)


def cycles_vs_paths(min_nodes: int = 4, max_nodes: int = 9, name: str = "cycles-vs-paths") -> Dataset:
    """Cycles (class 0) versus paths (class 1) with alternating node labels.

    Degree statistics separate the classes, so any model meeting the
    injectivity conditions can reach perfect accuracy.
    """
    graphs = []
    for n in range(min_nodes, max_nodes + 1):
        graphs.append(cycle_graph(n))
        graphs.append(path_graph(n))
    return Dataset(graphs=tuple(graphs), num_classes=2, feature_dim=2, name=name)


def molecules(n_graphs: int = 60, seed: int = 7, name: str = "synth-molecules") -> Dataset:
    """Molecule-flavored random graphs: 7 node-label types, 10-20 nodes.

    Class 0 graphs are trees (random attachment); class 1 graphs get extra
    chords that create rings, shifting the degree and cycle structure. Both
    use the same label distribution so the classes differ structurally, not
    by feature counts alone.
    """
    rng = make_rng(seed, stream=3)
    graphs = []
    for g in range(n_graphs):
        label = g % 2
        n = int(rng.integers(10, 21))
        adj = np.zeros((n, n))
        for v in range(1, n):
            u = int(rng.integers(0, v))
            adj[u, v] = adj[v, u] = 1.0
        if label == 1:
            extra = 2 + int(rng.integers(0, 3))
            added = 0
            while added < extra:
                u, v = rng.integers(0, n, size=2)
                u, v = int(u), int(v)
                if u != v and adj[u, v] == 0.0:
                    adj[u, v] = adj[v, u] = 1.0
                    added += 1
        node_labels = rng.integers(0, 7, size=n)
        graphs.append(Graph(adjacency=adj, features=_one_hot(node_labels, 7), label=label))
    return Dataset(graphs=tuple(graphs), num_classes=2, feature_dim=7, name=name)


def wl_failure_pair(feature_dim: int = 2):
    """C6 versus two disjoint triangles: 1-WL cannot tell them apart when all
    nodes share one label."""
    labels6 = [0] * 6
    g1 = Graph(adjacency=cycle_adjacency(6), features=_one_hot(labels6, feature_dim), label=0)
    adj = np.zeros((6, 6))
    for a, b in [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]:
        adj[a, b] = adj[b, a] = 1.0
    g2 = Graph(adjacency=adj, features=_one_hot(labels6, feature_dim), label=1)
    return g1, g2


def sifdg_fixture_pair():
    """Structurally isomorphic, feature-distinct pair with equal label counts.

    Both graphs are a 6-cycle plus one isolated node. Graph 1 alternates
    labels 0/1 around the cycle with the lone label-2 node off-cycle; graph 2
    moves the label-2 node onto the cycle and parks a label-0 node off-cycle.
    The label multisets match, so the raw-feature readout sums are identical
    and only the arrangement differs; no label-preserving isomorphism exists
    because the isolated nodes carry different labels. Label-1 nodes occupy
    the same positions in both graphs, so channel 1 carries no trace of the
    difference and a mask keeping only channel 1 cancels it for every choice
    of weights.
    """
    def build(cycle_labels, lone_label, cls):
        adj = np.zeros((7, 7))
        adj[:6, :6] = cycle_adjacency(6)
        feats = _one_hot(list(cycle_labels) + [lone_label], 3)
        return Graph(adjacency=adj, features=feats, label=cls)

    g1 = build([0, 1, 0, 1, 0, 1], 2, 0)
    g2 = build([2, 1, 0, 1, 0, 1], 0, 1)
    return g1, g2


def canceling_first_layer_mask(width: int) -> np.ndarray:
    """First-layer mask (3 x width) that zeroes the feature channels where
    the SIFDG fixture pair differs, making their layer-1 outputs provably
    identical for every choice of weights."""
    mask = np.zeros((3, width))
    mask[1, :] = 1.0
    return mask


def sifdg_dataset(name: str = "sifdg-fixture") -> Dataset:
    g1, g2 = sifdg_fixture_pair()
    return Dataset(graphs=(g1, g2), num_classes=2, feature_dim=3, name=name)


def sifdg_training_dataset(copies: int = 20, name: str = "sifdg-train") -> Dataset:
    """Balanced dataset of the fixture pair replicated; accuracy on it is the
    post-pruning recoverability probe."""
    g1, g2 = sifdg_fixture_pair()
    graphs = []
    for _ in range(copies):
        graphs.extend([g1, g2])
    return Dataset(graphs=tuple(graphs), num_classes=2, feature_dim=3, name=name)


BUILTIN_DATASETS = {
    "cycles-vs-paths": cycles_vs_paths,
    "synth-molecules": molecules,
    "sifdg-train": sifdg_training_dataset,
}


def load_builtin(name: str) -> Dataset:
    if name not in BUILTIN_DATASETS:
        raise KeyError(f"unknown builtin dataset {name!r}; choices: {sorted(BUILTIN_DATASETS)}")
    return BUILTIN_DATASETS[name]()
