"""Graph data model, dataset container, and TUDataset plain-text parser.

Graphs are immutable after construction: adjacency is a symmetric binary
matrix with zero diagonal, features are one-hot node-label encodings, and
the class label is a 0-based integer.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .tensor import make_rng


class DataError(Exception):
    """Invalid or inconsistent graph data."""


class ParseError(DataError):
    """Malformed input file; message names the file and line."""


@dataclass(frozen=True)
class Graph:
    adjacency: np.ndarray
    features: np.ndarray
    label: int

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.float64)
        feat = np.asarray(self.features, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DataError(f"adjacency must be square, got {adj.shape}")
        n = adj.shape[0]
        if n < 1:
            raise DataError("graph must have at least one node")
        if not np.array_equal(adj, adj.T):
            raise DataError("adjacency must be symmetric")
        if not np.all((adj == 0) | (adj == 1)):
            raise DataError("adjacency must be binary")
        if feat.ndim != 2 or feat.shape[0] != n:
            raise DataError(f"features must be (n x d), got {feat.shape}")
        onehot = (feat == 1).sum(axis=1) == 1
        zeros = (feat == 0).sum(axis=1) == feat.shape[1] - 1
        if not (np.all(onehot) and np.all(zeros)):
            raise DataError("each feature row must be one-hot")
        if self.label < 0:
            raise DataError("label must be non-negative")
        adj.setflags(write=False)
        feat.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feat)

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edge_count(self) -> int:
        return int(self.adjacency.sum()) // 2

    @property
    def node_labels(self) -> np.ndarray:
        """Integer node labels recovered from the one-hot feature rows."""
        return np.argmax(self.features, axis=1)


@dataclass(frozen=True)
class Dataset:
    graphs: tuple
    num_classes: int
    feature_dim: int
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for i, g in enumerate(self.graphs):
            if g.features.shape[1] != self.feature_dim:
                raise DataError(f"graph {i}: feature_dim {g.features.shape[1]} != {self.feature_dim}")
            if g.label >= self.num_classes:
                raise DataError(f"graph {i}: label {g.label} >= num_classes {self.num_classes}")

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)

    def __getitem__(self, i) -> Graph:
        return self.graphs[i]

    def validate_nontrivial(self):
        """Reject graphs without edges (precondition of the expressivity bounds)."""
        for i, g in enumerate(self.graphs):
            if g.edge_count < 1:
                raise DataError(f"graph {i} in {self.name!r} has no edges")

    def subset(self, indices, name: str = "") -> "Dataset":
        return Dataset(
            graphs=tuple(self.graphs[i] for i in indices),
            num_classes=self.num_classes,
            feature_dim=self.feature_dim,
            name=name or self.name,
        )


def graphs_equal(a: Graph, b: Graph) -> bool:
    return (
        a.label == b.label
        and np.array_equal(a.adjacency, b.adjacency)
        and np.array_equal(a.features, b.features)
    )


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    return (
        len(a) == len(b)
        and a.num_classes == b.num_classes
        and a.feature_dim == b.feature_dim
        and all(graphs_equal(x, y) for x, y in zip(a, b))
    )


# ---------------------------------------------------------------------------
# TUDataset plain-text format
# ---------------------------------------------------------------------------

def _read_int_lines(path: str, per_line: int):
    """Yield tuples of ints per line; errors name the file and line number."""
    if not os.path.isfile(path):
        raise ParseError(f"missing file: {path}")
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != per_line:
                raise ParseError(f"{path}:{lineno}: expected {per_line} fields, got {len(parts)}")
            try:
                yield tuple(int(p) for p in parts)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer token in {line!r}") from None


def parse_tudataset(root_path: str, name: str) -> Dataset:
    """Parse the TUDataset plain-text format into a Dataset.

    Node labels are one-hot encoded over the distinct labels observed (sorted
    ascending); when ``{name}_node_labels.txt`` is absent, node degrees serve
    as labels. Graph labels are remapped to contiguous 0-based class indices.
    Self-loops are dropped and the adjacency is symmetrized.
    """
    prefix = os.path.join(root_path, name)
    indicator = [v[0] for v in _read_int_lines(prefix + "_graph_indicator.txt", 1)]
    graph_labels = [v[0] for v in _read_int_lines(prefix + "_graph_labels.txt", 1)]
    edges = list(_read_int_lines(prefix + "_A.txt", 2))

    n_nodes = len(indicator)
    n_graphs = len(graph_labels)
    if n_nodes == 0 or n_graphs == 0:
        raise ParseError(f"{prefix}: empty indicator or label file")

    graph_ids = sorted(set(indicator))
    if graph_ids != list(range(min(graph_ids), min(graph_ids) + n_graphs)):
        raise ParseError(f"{prefix}_graph_indicator.txt: graph ids are not contiguous")
    base_gid = min(graph_ids)

    # Node id -> (graph index, local index), 1-indexed input.
    local_index = np.zeros(n_nodes, dtype=int)
    counts = {}
    node_graph = np.array([gid - base_gid for gid in indicator], dtype=int)
    for i, g in enumerate(node_graph):
        local_index[i] = counts.get(g, 0)
        counts[g] = local_index[i] + 1
    sizes = [counts.get(g, 0) for g in range(n_graphs)]
    if min(sizes) < 1:
        raise ParseError(f"{prefix}: graph with zero nodes")

    adjacencies = [np.zeros((s, s)) for s in sizes]
    for u, v in edges:
        if not (1 <= u <= n_nodes and 1 <= v <= n_nodes):
            raise ParseError(f"{prefix}_A.txt: node {max(u, v)} outside indicator range 1..{n_nodes}")
        gu, gv = node_graph[u - 1], node_graph[v - 1]
        if gu != gv:
            raise ParseError(f"{prefix}_A.txt: edge ({u}, {v}) crosses graphs")
        if u == v:
            continue  # self-loops come from the model, not the data
        a = adjacencies[gu]
        a[local_index[u - 1], local_index[v - 1]] = 1
        a[local_index[v - 1], local_index[u - 1]] = 1

    node_label_path = prefix + "_node_labels.txt"
    if os.path.isfile(node_label_path):
        raw_node_labels = [v[0] for v in _read_int_lines(node_label_path, 1)]
        if len(raw_node_labels) != n_nodes:
            raise ParseError(f"{node_label_path}: {len(raw_node_labels)} labels for {n_nodes} nodes")
    else:
        # Degree-as-label fallback for datasets shipped without node labels.
        raw_node_labels = []
        for i in range(n_nodes):
            g = node_graph[i]
            raw_node_labels.append(int(adjacencies[g][local_index[i]].sum()))

    vocab = sorted(set(raw_node_labels))
    vocab_index = {lab: i for i, lab in enumerate(vocab)}
    d = len(vocab)

    class_vocab = sorted(set(graph_labels))
    class_index = {lab: i for i, lab in enumerate(class_vocab)}

    features = [np.zeros((s, d)) for s in sizes]
    for i in range(n_nodes):
        g = node_graph[i]
        features[g][local_index[i], vocab_index[raw_node_labels[i]]] = 1.0

    graphs = [
        Graph(adjacency=adjacencies[g], features=features[g], label=class_index[graph_labels[g]])
        for g in range(n_graphs)
    ]
    return Dataset(graphs=tuple(graphs), num_classes=len(class_vocab), feature_dim=d, name=name)


def write_tudataset(dataset: Dataset, root_path: str, name: str):
    """Write a Dataset back to TUDataset files (single space after comma, LF endings).

    Node labels are emitted as feature indices and graph labels as 0-based
    class indices, so parse(write(ds)) == ds.
    """
    os.makedirs(root_path, exist_ok=True)
    prefix = os.path.join(root_path, name)
    indicator, node_labels, edge_lines = [], [], []
    offset = 0
    for gid, g in enumerate(dataset.graphs, start=1):
        n = g.node_count
        indicator.extend([gid] * n)
        node_labels.extend(int(x) for x in g.node_labels)
        rows, cols = np.nonzero(g.adjacency)
        for r, c in zip(rows, cols):
            edge_lines.append(f"{offset + r + 1}, {offset + c + 1}")
        offset += n
    with open(prefix + "_A.txt", "w", newline="\n") as fh:
        fh.write("\n".join(edge_lines) + ("\n" if edge_lines else ""))
    with open(prefix + "_graph_indicator.txt", "w", newline="\n") as fh:
        fh.write("\n".join(str(i) for i in indicator) + "\n")
    with open(prefix + "_graph_labels.txt", "w", newline="\n") as fh:
        fh.write("\n".join(str(g.label) for g in dataset.graphs) + "\n")
    with open(prefix + "_node_labels.txt", "w", newline="\n") as fh:
        fh.write("\n".join(str(x) for x in node_labels) + "\n")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split(dataset: Dataset, fractions, seed: int):
    """Deterministic stratified train/val/test split.

    Per class, val and test sizes are floor-allocated from the fractions and
    the remainder goes to train; the union of the three parts is the input
    multiset.
    """
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    f_train, f_val, f_test = fractions
    if min(f_train, f_val, f_test) <= 0:
        raise ValueError("fractions must be positive")
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")

    rng = make_rng(seed, stream=0)
    by_class = {}
    for i, g in enumerate(dataset.graphs):
        by_class.setdefault(g.label, []).append(i)

    train_idx, val_idx, test_idx = [], [], []
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        idx = idx[rng.permutation(len(idx))]
        n_val = math.floor(f_val * len(idx))
        n_test = math.floor(f_test * len(idx))
        val_idx.extend(idx[:n_val])
        test_idx.extend(idx[n_val:n_val + n_test])
        train_idx.extend(idx[n_val + n_test:])

    return (
        dataset.subset(sorted(train_idx), name=dataset.name + "/train"),
        dataset.subset(sorted(val_idx), name=dataset.name + "/val"),
        dataset.subset(sorted(test_idx), name=dataset.name + "/test"),
    )


# ---------------------------------------------------------------------------
# Exact isomorphism search and SIFDG detection
# ---------------------------------------------------------------------------

def _refinement_invariants(adj: np.ndarray, labels, rounds: int = 3):
    """Cheap per-node invariants (color refinement) used to prune backtracking."""
    colors = [int(x) for x in labels]
    for _ in range(rounds):
        table = {}
        nxt = []
        for v in range(adj.shape[0]):
            key = (colors[v], tuple(sorted(colors[u] for u in np.nonzero(adj[v])[0])))
            nxt.append(table.setdefault(key, len(table)))
        if len(set(nxt)) == len(set(colors)):
            colors = nxt
            break
        colors = nxt
    return colors


def find_isomorphism(adj1: np.ndarray, adj2: np.ndarray, labels1=None, labels2=None):
    """Backtracking isomorphism search; returns a node mapping array or None.

    ``perm[i]`` is the node of graph 2 matched to node ``i`` of graph 1. When
    labels are given the mapping must preserve them (labeled isomorphism).
    """
    n = adj1.shape[0]
    if adj2.shape[0] != n:
        return None
    l1 = [0] * n if labels1 is None else [int(x) for x in labels1]
    l2 = [0] * n if labels2 is None else [int(x) for x in labels2]
    if sorted(l1) != sorted(l2):
        return None
    deg1, deg2 = adj1.sum(axis=1), adj2.sum(axis=1)
    if sorted(deg1) != sorted(deg2):
        return None
    if sorted(zip(l1, deg1)) != sorted(zip(l2, deg2)):
        return None

    # Order graph-1 nodes by connectivity to already-placed nodes.
    order = []
    seen = set()
    while len(order) < n:
        best, best_score = None, (-1, -1)
        for v in range(n):
            if v in seen:
                continue
            attach = sum(1 for u in order if adj1[v, u])
            score = (attach, deg1[v])
            if score > best_score:
                best, best_score = v, score
        order.append(best)
        seen.add(best)

    mapping = [-1] * n
    used = [False] * n

    def backtrack(pos: int) -> bool:
        if pos == n:
            return True
        v = order[pos]
        for w in range(n):
            if used[w] or l1[v] != l2[w] or deg1[v] != deg2[w]:
                continue
            ok = True
            for u in order[:pos]:
                if adj1[v, u] != adj2[w, mapping[u]]:
                    ok = False
                    break
            if ok:
                mapping[v] = w
                used[w] = True
                if backtrack(pos + 1):
                    return True
                mapping[v] = -1
                used[w] = False
        return False

    if backtrack(0):
        return np.array(mapping, dtype=int)
    return None


def structurally_isomorphic(g1: Graph, g2: Graph):
    """Adjacency-only isomorphism; returns a witnessing permutation or None."""
    return find_isomorphism(g1.adjacency, g2.adjacency)


def labeled_isomorphic(g1: Graph, g2: Graph) -> bool:
    """Isomorphism respecting node labels (feature rows)."""
    return find_isomorphism(
        g1.adjacency, g2.adjacency, g1.node_labels, g2.node_labels
    ) is not None


@dataclass(frozen=True)
class SifdgPair:
    """Structurally isomorphic, feature-divergent graph pair with a witness."""
    a: int
    b: int
    permutation: np.ndarray = field(repr=False)


def _structure_signature(adj: np.ndarray):
    colors = _refinement_invariants(adj, [0] * adj.shape[0], rounds=adj.shape[0])
    # Canonical: iteratively re-canonicalize color histogram.
    hist = {}
    for c in colors:
        hist[c] = hist.get(c, 0) + 1
    return (adj.shape[0], int(adj.sum()) // 2, tuple(sorted(hist.values())))


def sifdg_pairs(dataset: Dataset, node_cap: int = 16):
    """All index pairs (a < b) that are structurally isomorphic but not
    labeled-isomorphic, each with one witnessing structural permutation.

    Graphs above ``node_cap`` nodes are skipped with a warning because the
    exact search is exponential.
    """
    skipped = [i for i, g in enumerate(dataset) if g.node_count > node_cap]
    if skipped:
        warnings.warn(
            f"sifdg_pairs: skipping {len(skipped)} graphs above the {node_cap}-node cap",
            stacklevel=2,
        )
    eligible = [i for i in range(len(dataset)) if i not in set(skipped)]
    buckets = {}
    for i in eligible:
        buckets.setdefault(_structure_signature(dataset[i].adjacency), []).append(i)

    pairs = []
    for bucket in buckets.values():
        for ai in range(len(bucket)):
            for bi in range(ai + 1, len(bucket)):
                a, b = bucket[ai], bucket[bi]
                perm = structurally_isomorphic(dataset[a], dataset[b])
                if perm is None:
                    continue
                if not labeled_isomorphic(dataset[a], dataset[b]):
                    pairs.append(SifdgPair(a=a, b=b, permutation=perm))
    return pairs
