"""1-WL color refinement, distinguishability tests, and isomorphism-type
deduplication over datasets.

The injective hash is a dictionary from (own color, sorted neighbor-color
multiset) to the next unused integer. Cross-graph comparisons always share
one table, otherwise color multisets would not be comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import Dataset, Graph, find_isomorphism


@dataclass
class ColorAssignment:
    """Per-iteration color history for one graph; history[0] is the input labeling."""
    history: list
    iterations_run: int
    stable: bool

    @property
    def final(self) -> np.ndarray:
        return self.history[-1]

    def multiset(self, t: int) -> tuple:
        return tuple(sorted(self.history[t]))


class _HashTable:
    """Injective (color, neighbor multiset) -> consecutive integer mapping."""

    def __init__(self, start: int):
        self._table = {}
        self._next = start

    def get(self, own: int, neighbors: tuple) -> int:
        key = (own, neighbors)
        if key not in self._table:
            self._table[key] = self._next
            self._next += 1
        return self._table[key]


def _neighbor_lists(graph: Graph):
    return [np.nonzero(graph.adjacency[v])[0] for v in range(graph.node_count)]


def refine_joint(graphs, max_iterations=None):
    """Run 1-WL on several graphs in parallel with a shared hash table.

    Refinement stops when the number of distinct colors across all graphs is
    unchanged between consecutive iterations, or at ``max_iterations``.
    Returns one ColorAssignment per graph.
    """
    colors = [np.argmax(g.features, axis=1).astype(int) for g in graphs]
    histories = [[c.copy()] for c in colors]
    neighbors = [_neighbor_lists(g) for g in graphs]
    start = max((int(c.max()) for c in colors if c.size), default=0) + 1
    table = _HashTable(start)

    def distinct_count(cols):
        return len(set(int(x) for c in cols for x in c))

    prev_count = distinct_count(colors)
    total_nodes = sum(g.node_count for g in graphs)
    # The distinct-color count strictly increases until stability, so at most
    # total_nodes iterations are ever needed.
    limit = total_nodes if max_iterations is None else min(max_iterations, total_nodes)
    iterations = 0
    stable = False
    for _ in range(limit):
        new_colors = []
        for gi, g in enumerate(graphs):
            c = colors[gi]
            nxt = np.empty_like(c)
            for v in range(g.node_count):
                multiset = tuple(sorted(int(c[u]) for u in neighbors[gi][v]))
                nxt[v] = table.get(int(c[v]), multiset)
            new_colors.append(nxt)
        iterations += 1
        count = distinct_count(new_colors)
        colors = new_colors
        for gi in range(len(graphs)):
            histories[gi].append(colors[gi].copy())
        if count == prev_count:
            stable = True
            break
        prev_count = count

    return [
        ColorAssignment(history=histories[gi], iterations_run=iterations, stable=stable)
        for gi in range(len(graphs))
    ]


def refine(graph: Graph, max_iterations=None) -> ColorAssignment:
    """1-WL refinement of a single graph; initial colors are the node labels."""
    return refine_joint([graph], max_iterations=max_iterations)[0]


def wl_distinguishable(g1: Graph, g2: Graph, t=None) -> bool:
    """True iff the shared-hash color multisets differ at some iteration <= t.

    ``t=None`` runs to stability, which decides distinguishability for every
    finite t.
    """
    if t is not None and t < 0:
        raise ValueError("t must be >= 0")
    a, b = refine_joint([g1, g2], max_iterations=t)
    for it in range(len(a.history)):
        if a.multiset(it) != b.multiset(it):
            return True
    return False


@dataclass
class IsoTypes:
    """One representative per isomorphism type plus class multiplicities."""
    representatives: list
    multiplicities: list
    approximate: list = field(default_factory=list)  # per-type flag: WL-only grouping

    @property
    def count(self) -> int:
        return len(self.representatives)


def isomorphism_type_representatives(dataset: Dataset, t: int = 0, node_cap: int = 16) -> IsoTypes:
    """Partition a dataset into isomorphism types and pick one index per type.

    Graphs are first grouped by stable labeled-WL color multisets (run jointly
    with one hash table, for at least ``t`` iterations). WL classes of graphs
    small enough for exact search are then refined by exact labeled
    isomorphism; oversized classes stay WL-grouped and are flagged approximate.
    """
    if len(dataset) == 0:
        return IsoTypes(representatives=[], multiplicities=[], approximate=[])
    # Refinement runs to stability, which subsumes any requested depth t.
    assignments = refine_joint(list(dataset.graphs), max_iterations=None)
    wl_classes = {}
    for i, asg in enumerate(assignments):
        wl_classes.setdefault(asg.multiset(len(asg.history) - 1), []).append(i)

    reps, mults, approx = [], [], []
    for key in sorted(wl_classes):
        members = wl_classes[key]
        if any(dataset[i].node_count > node_cap for i in members):
            reps.append(members[0])
            mults.append(len(members))
            approx.append(True)
            continue
        subclasses = []  # list of (representative, [members])
        for i in members:
            placed = False
            for rep, bucket in subclasses:
                if find_isomorphism(
                    dataset[rep].adjacency, dataset[i].adjacency,
                    dataset[rep].node_labels, dataset[i].node_labels,
                ) is not None:
                    bucket.append(i)
                    placed = True
                    break
            if not placed:
                subclasses.append((i, [i]))
        for rep, bucket in subclasses:
            reps.append(rep)
            mults.append(len(bucket))
            approx.append(False)
    return IsoTypes(representatives=reps, multiplicities=mults, approximate=approx)
