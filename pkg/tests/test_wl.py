import numpy as np
import pytest

from sparsegnn import synth
from sparsegnn.graphs import Dataset, find_isomorphism
from sparsegnn.tensor import make_rng
from sparsegnn.wl import (
    isomorphism_type_representatives,
    refine,
    refine_joint,
    wl_distinguishable,
)


def random_graph(rng, n, n_labels=2, p=0.4):
    adj = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                adj[i, j] = adj[j, i] = 1.0
    labels = rng.integers(0, n_labels, size=n)
    feat = np.zeros((n, n_labels))
    feat[np.arange(n), labels] = 1.0
    from sparsegnn.graphs import Graph
    return Graph(adjacency=adj, features=feat, label=0)


class TestRefinement:
    def test_path_stabilizes_with_endpoint_colors(self):
        g = synth.path_graph(5, labels=[0] * 5)
        asg = refine(g)
        assert asg.stable
        # endpoints share a color distinct from interior nodes
        final = asg.final
        assert final[0] == final[4]
        assert final[0] != final[2]

    def test_cycle_uniform_labels_single_color(self):
        g = synth.cycle_graph(6, labels=[0] * 6)
        asg = refine(g)
        assert len(set(asg.final)) == 1

    def test_history_starts_at_input_labels(self):
        g = synth.path_graph(4, labels=[0, 1, 1, 0])
        asg = refine(g)
        assert list(asg.history[0]) == [0, 1, 1, 0]

    def test_refinement_is_monotone(self):
        rng = make_rng(3)
        g = random_graph(rng, 8)
        asg = refine(g)
        counts = [len(set(h)) for h in asg.history]
        assert counts == sorted(counts)

    def test_shared_table_makes_colors_comparable(self):
        g1 = synth.cycle_graph(4, labels=[0] * 4)
        g2 = synth.cycle_graph(5, labels=[0] * 5)
        a, b = refine_joint([g1, g2])
        # all nodes are structurally alike across both cycles
        assert set(a.final) == set(b.final)


class TestDistinguishability:
    def test_c6_vs_two_triangles_indistinguishable(self):
        g1, g2 = synth.wl_failure_pair()
        assert not wl_distinguishable(g1, g2)
        assert find_isomorphism(g1.adjacency, g2.adjacency,
                                g1.node_labels, g2.node_labels) is None

    def test_cycle_vs_path(self):
        assert wl_distinguishable(synth.cycle_graph(5), synth.path_graph(5))

    def test_label_difference_detected_at_iteration_zero(self):
        g1 = synth.cycle_graph(6, labels=[0] * 6)
        g2 = synth.cycle_graph(6, labels=[1] + [0] * 5)
        assert wl_distinguishable(g1, g2, t=0)

    def test_negative_t_rejected(self):
        g = synth.cycle_graph(4)
        with pytest.raises(ValueError):
            wl_distinguishable(g, g, t=-1)

    def test_soundness_random_corpus(self):
        # distinguishable implies non-isomorphic, on a small random corpus
        rng = make_rng(11)
        for _ in range(40):
            g1 = random_graph(rng, int(rng.integers(3, 7)))
            g2 = random_graph(rng, int(rng.integers(3, 7)))
            if wl_distinguishable(g1, g2):
                if g1.node_count == g2.node_count:
                    assert find_isomorphism(g1.adjacency, g2.adjacency,
                                            g1.node_labels, g2.node_labels) is None


class TestIsoTypes:
    def test_duplicates_collapse(self):
        g = synth.cycle_graph(5)
        ds = Dataset(graphs=(g, g, g), num_classes=1, feature_dim=2)
        types = isomorphism_type_representatives(ds)
        assert types.count == 1
        assert types.multiplicities == [3]

    def test_wl_equivalent_nonisomorphic_split_by_exact_search(self):
        g1, g2 = synth.wl_failure_pair()
        ds = Dataset(graphs=(g1, g2), num_classes=2, feature_dim=2)
        types = isomorphism_type_representatives(ds)
        assert types.count == 2
        assert types.approximate == [False, False]

    def test_node_cap_flags_approximate(self):
        g1, g2 = synth.wl_failure_pair()
        ds = Dataset(graphs=(g1, g2), num_classes=2, feature_dim=2)
        types = isomorphism_type_representatives(ds, node_cap=3)
        assert any(types.approximate)

    def test_mixed_dataset(self):
        ds = synth.cycles_vs_paths()
        types = isomorphism_type_representatives(ds)
        assert types.count == len(ds)  # all sizes/structures distinct
