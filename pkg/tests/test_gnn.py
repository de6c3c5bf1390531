import numpy as np
import pytest

from sparsegnn import gnn, synth
from sparsegnn.graphs import Graph
from sparsegnn.tensor import ShapeError, make_rng


def num_grad(f, arr, eps=1e-6):
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        fp = f()
        arr[idx] = orig - eps
        fm = f()
        arr[idx] = orig
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    denom = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return np.max(np.abs(a - b)) / denom


def full_gradcheck(model, graph, target):
    """Max relative error between analytic and central-difference gradients
    over every parameter of the model."""
    loss_fn = lambda: gnn.example_loss(gnn.forward(model, graph), target)
    _, grads = gnn.backward(model, graph, target)
    worst = 0.0
    for k, mp in enumerate(model.mp_layers):
        for j, layer in enumerate(mp.mlp):
            numeric = num_grad(loss_fn, layer.weights) * layer.mask
            worst = max(worst, rel_err(grads.weights[k][j], numeric))
        if mp.variant == "gin" and mp.train_epsilon:
            eps = 1e-6
            orig = mp.epsilon
            mp.epsilon = orig + eps
            fp = loss_fn()
            mp.epsilon = orig - eps
            fm = loss_fn()
            mp.epsilon = orig
            worst = max(worst, abs(grads.epsilons[k] - (fp - fm) / (2 * eps))
                        / max(abs(grads.epsilons[k]), 1e-8))
    numeric = num_grad(loss_fn, model.classifier)
    worst = max(worst, rel_err(grads.classifier, numeric))
    return worst


@pytest.mark.parametrize("variant", ["gin", "gcn"])
@pytest.mark.parametrize("activation", ["leaky_relu", "softsign"])
def test_gradcheck_all_parameters(variant, activation):
    ds = synth.cycles_vs_paths()
    rng = make_rng(42)
    model = gnn.build_model(2, 2, rng, variant=variant, activation=activation,
                            hidden_width=3)
    g = ds[3]
    assert full_gradcheck(model, g, g.label) < 1e-6


def test_gradcheck_with_mask():
    rng = make_rng(5)
    # softsign is smooth everywhere; masked columns put pre-activations at
    # exactly 0 where piecewise-linear activations would bias finite differences
    model = gnn.build_model(2, 2, rng, hidden_width=4, activation="softsign")
    for mp in model.mp_layers:
        for layer in mp.mlp:
            layer.mask = (rng.random(layer.weights.shape) >= 0.5).astype(float)
            layer.weights = layer.weights * layer.mask
    g = synth.cycle_graph(5)
    assert full_gradcheck(model, g, g.label) < 1e-6
    _, grads = gnn.backward(model, g, g.label)
    for k, mp in enumerate(model.mp_layers):
        for j, layer in enumerate(mp.mlp):
            assert np.all(grads.weights[k][j][layer.mask == 0.0] == 0.0)


def test_readout_includes_raw_feature_sum():
    rng = make_rng(0)
    model = gnn.build_model(2, 2, rng, hidden_width=3)
    g = synth.path_graph(4, labels=[0, 1, 1, 0])
    cache = gnn.forward(model, g)
    assert cache.readout.shape == (1, model.readout_dim)
    assert np.allclose(cache.readout[0, :2], g.features.sum(axis=0))


def test_forward_permutation_invariance():
    rng = make_rng(1)
    model = gnn.build_model(2, 2, rng, hidden_width=4, variant="gcn")
    g = synth.cycle_graph(6, labels=[0, 1, 0, 1, 0, 1])
    perm = np.array([3, 1, 5, 0, 2, 4])
    adj = g.adjacency[np.ix_(perm, perm)]
    feat = g.features[perm]
    gp = Graph(adjacency=adj, features=feat, label=g.label)
    c1, c2 = gnn.forward(model, g), gnn.forward(model, gp)
    assert np.allclose(c1.logits, c2.logits)


def test_forward_rejects_wrong_feature_dim():
    model = gnn.build_model(3, 2, make_rng(0))
    with pytest.raises(ShapeError):
        gnn.forward(model, synth.cycle_graph(4))  # feature dim 2


def test_gin_epsilon_enters_aggregation():
    model = gnn.build_model(2, 2, make_rng(2), mp_layers=2)
    g = synth.cycle_graph(4)
    base = gnn.forward(model, g).logits.copy()
    model.mp_layers[0].epsilon = 0.7
    assert not np.allclose(base, gnn.forward(model, g).logits)


def test_gcn_aggregation_is_normalized():
    layer = gnn.MpLayer(mlp=[], variant="gcn", epsilon=0.0)
    adj = synth.cycle_adjacency(4)
    agg = gnn.aggregation_matrix(layer, adj)
    # symmetric normalization of A + I on a 2-regular graph: row sums 1
    assert np.allclose(agg.sum(axis=1), 1.0)
    assert np.allclose(agg, agg.T)


class TestTraining:
    def test_masked_weights_never_move(self):
        ds = synth.cycles_vs_paths()
        model = gnn.build_model(2, 2, make_rng(3), hidden_width=6)
        layer = model.mp_layers[0].mlp[0]
        layer.mask = layer.mask.copy()
        layer.mask[0, 0] = 0.0
        gnn.train(model, ds, epochs=5, rng=make_rng(3, 1))
        assert layer.weights[0, 0] == 0.0

    def test_loss_decreases(self):
        ds = synth.cycles_vs_paths()
        model = gnn.build_model(2, 2, make_rng(4), hidden_width=8)
        _, losses = gnn.train(model, ds, epochs=50, rng=make_rng(4, 1))
        assert losses[-1] < losses[0]

    def test_training_deterministic(self):
        ds = synth.cycles_vs_paths()
        out = []
        for _ in range(2):
            model = gnn.build_model(2, 2, make_rng(5), hidden_width=4)
            gnn.train(model, ds, epochs=3, rng=make_rng(5, 1))
            out.append(model.mp_layers[0].mlp[0].weights.copy())
        assert np.array_equal(out[0], out[1])

    def test_evaluate_ties_break_low(self):
        # zero classifier -> all logits equal -> argmax picks class 0
        model = gnn.build_model(2, 2, make_rng(6))
        model.classifier[:] = 0.0
        ds = synth.cycles_vs_paths()
        acc = gnn.evaluate(model, ds)
        frac0 = sum(g.label == 0 for g in ds) / len(ds)
        assert acc == pytest.approx(frac0)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        model = gnn.build_model(3, 2, make_rng(7), variant="gin", hidden_width=5)
        model.mp_layers[1].mlp[0].mask[2, 2] = 0.0
        model.mp_layers[1].mlp[0].weights[2, 2] = 0.0
        path = str(tmp_path / "ckpt.json")
        gnn.save_checkpoint(model, path)
        back = gnn.load_checkpoint(path)
        assert (back.activation, back.alpha, back.feature_dim, back.num_classes) == \
            (model.activation, model.alpha, model.feature_dim, model.num_classes)
        for mp_a, mp_b in zip(model.mp_layers, back.mp_layers):
            assert mp_a.variant == mp_b.variant
            assert mp_a.epsilon == mp_b.epsilon
            for la, lb in zip(mp_a.mlp, mp_b.mlp):
                assert np.array_equal(la.weights, lb.weights)
                assert np.array_equal(la.mask, lb.mask)
        assert np.array_equal(model.classifier, back.classifier)
        g = synth.cycle_graph(4, feature_dim=3)
        assert np.array_equal(gnn.forward(model, g).logits, gnn.forward(back, g).logits)

    def test_checkpoint_bytes_deterministic(self, tmp_path):
        model = gnn.build_model(2, 2, make_rng(8))
        p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        gnn.save_checkpoint(model, p1)
        gnn.save_checkpoint(model, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()
