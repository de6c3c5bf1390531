"""Moment-based message-passing networks (GIN / GCN) with masked MLPs.

The forward pass follows the matrix form H_k = MLP_k(Agg . H_{k-1}) with a
per-variant aggregation matrix, the readout concatenates per-layer sum-pooled
embeddings (including the raw-feature layer-0 term), and a single dense
unmasked linear layer produces class logits. Gradients are computed by
explicit reverse-mode differentiation; pruned weight entries read as exactly
zero and receive zero gradient, so training never revives them.

No layer has a bias term: the masked forward definition sigma(x (M . W))
does not include one, and biases would let the network sidestep the
irrecoverability analysis this package exists to reproduce.
"""

from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass

import numpy as np

from .graphs import Dataset, Graph
from .tensor import ShapeError, uniform_init


# ---------------------------------------------------------------------------
# Activations: injective zero-fixing ones for the theory suites, relu for
# experiment replication.
# ---------------------------------------------------------------------------

def _relu(x):
    return np.maximum(x, 0.0)


def _relu_prime(x):
    return (x > 0).astype(np.float64)


def _leaky(x, alpha):
    return np.where(x > 0, x, alpha * x)


def _leaky_prime(x, alpha):
    return np.where(x > 0, 1.0, alpha)


def _softsign(x):
    return x / (1.0 + np.abs(x))


def _softsign_prime(x):
    return 1.0 / (1.0 + np.abs(x)) ** 2


def activation_pair(name: str, alpha: float = 0.01):
    if name == "relu":
        return _relu, _relu_prime
    if name == "leaky_relu":
        return (lambda x: _leaky(x, alpha)), (lambda x: _leaky_prime(x, alpha))
    if name == "softsign":
        return _softsign, _softsign_prime
    raise ValueError(f"unknown activation {name!r}")


# ---------------------------------------------------------------------------
# Model types
# ---------------------------------------------------------------------------

@dataclass
class MlpLayer:
    weights: np.ndarray  # (fan_in, fan_out)
    mask: np.ndarray     # binary, same shape

    def __post_init__(self):
        if self.weights.shape != self.mask.shape:
            raise ShapeError(f"mask shape {self.mask.shape} != weights {self.weights.shape}")

    def effective(self) -> np.ndarray:
        return self.mask * self.weights


@dataclass
class MpLayer:
    mlp: list
    variant: str = "gin"          # "gin" | "gcn"
    epsilon: float = 0.0          # GIN only
    train_epsilon: bool = True

    @property
    def out_width(self) -> int:
        return self.mlp[-1].weights.shape[1]


@dataclass
class GnnModel:
    mp_layers: list
    classifier: np.ndarray        # (readout_dim, num_classes), never pruned
    activation: str
    alpha: float
    feature_dim: int
    num_classes: int

    @property
    def readout_dim(self) -> int:
        return self.feature_dim + sum(mp.out_width for mp in self.mp_layers)

    def copy(self) -> "GnnModel":
        return copy.deepcopy(self)


def build_model(
    feature_dim: int,
    num_classes: int,
    rng: np.random.Generator,
    mp_layers: int = 2,
    hidden_width=None,
    mlp_depth: int = 2,
    variant: str = "gin",
    activation: str = "leaky_relu",
    alpha: float = 0.01,
    epsilon: float = 0.0,
    train_epsilon: bool = True,
) -> GnnModel:
    """Random model with U(-sqrt(1/fan_in), sqrt(1/fan_in)) weights and all-ones masks.

    Hidden width defaults to the feature dimension.
    """
    if variant not in ("gin", "gcn"):
        raise ValueError(f"unknown variant {variant!r}")
    width = feature_dim if hidden_width is None else hidden_width
    layers = []
    in_dim = feature_dim
    for _ in range(mp_layers):
        mlp = []
        fan_in = in_dim
        for _ in range(mlp_depth):
            w = uniform_init(fan_in, width, fan_in, rng)
            mlp.append(MlpLayer(weights=w, mask=np.ones_like(w)))
            fan_in = width
        layers.append(MpLayer(mlp=mlp, variant=variant, epsilon=epsilon,
                              train_epsilon=train_epsilon and variant == "gin"))
        in_dim = width
    readout_dim = feature_dim + mp_layers * width
    classifier = uniform_init(readout_dim, num_classes, readout_dim, rng)
    return GnnModel(
        mp_layers=layers,
        classifier=classifier,
        activation=activation,
        alpha=alpha,
        feature_dim=feature_dim,
        num_classes=num_classes,
    )


def aggregation_matrix(layer: MpLayer, adjacency: np.ndarray) -> np.ndarray:
    n = adjacency.shape[0]
    if layer.variant == "gin":
        return (1.0 + layer.epsilon) * np.eye(n) + adjacency
    # GCN: symmetric-normalized A+I.
    a_hat = adjacency + np.eye(n)
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardCache:
    layer_outputs: list   # H_0..H_K, node embeddings per MP layer (H_0 = X)
    aggs: list            # aggregation matrix per MP layer
    mlp_inputs: list      # per MP layer: inputs to each MLP layer
    zs: list              # per MP layer: pre-activations of each MLP layer
    readout: np.ndarray   # (1, readout_dim)
    logits: np.ndarray    # (1, num_classes)


def forward(model: GnnModel, graph: Graph) -> ForwardCache:
    if graph.features.shape[1] != model.feature_dim:
        raise ShapeError(
            f"graph feature dim {graph.features.shape[1]} != model {model.feature_dim}"
        )
    act, _ = activation_pair(model.activation, model.alpha)
    h = graph.features
    layer_outputs = [h]
    aggs, mlp_inputs, zs = [], [], []
    for mp in model.mp_layers:
        agg = aggregation_matrix(mp, graph.adjacency)
        aggs.append(agg)
        x = agg @ h
        inputs, z_list = [], []
        for layer in mp.mlp:
            inputs.append(x)
            z = x @ layer.effective()
            z_list.append(z)
            x = act(z)
        mlp_inputs.append(inputs)
        zs.append(z_list)
        h = x
        layer_outputs.append(h)
    readout = np.concatenate([H.sum(axis=0) for H in layer_outputs])[None, :]
    logits = readout @ model.classifier
    return ForwardCache(
        layer_outputs=layer_outputs,
        aggs=aggs,
        mlp_inputs=mlp_inputs,
        zs=zs,
        readout=readout,
        logits=logits,
    )


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def example_loss(cache: ForwardCache, target: int) -> float:
    p = _softmax(cache.logits[0])
    return float(-np.log(max(p[target], 1e-300)))


@dataclass
class Gradients:
    """Loss gradients of one example; shapes mirror the parameters."""
    weights: list                      # per MP layer: list of per-MLP-layer arrays
    epsilons: list                     # per MP layer: float or None
    classifier: np.ndarray

    def scaled(self, c: float) -> "Gradients":
        return Gradients(
            weights=[[w * c for w in mp] for mp in self.weights],
            epsilons=[None if e is None else e * c for e in self.epsilons],
            classifier=self.classifier * c,
        )


def backward(model: GnnModel, graph: Graph, target: int, cache: ForwardCache = None):
    """Exact reverse-mode gradients of the softmax cross-entropy loss.

    Returns (loss, Gradients). Pruned weight entries receive gradient zero.
    """
    loss, grads, _ = backward_internals(model, graph, target, cache)
    return loss, grads


def backward_internals(model: GnnModel, graph: Graph, target: int, cache: ForwardCache = None):
    """Like backward, but also returns the pre-activation gradients
    dzs[k][j] = dL/dZ for MLP layer j of MP layer k."""
    if cache is None:
        cache = forward(model, graph)
    _, act_prime = activation_pair(model.activation, model.alpha)
    n = graph.node_count

    p = _softmax(cache.logits[0])
    loss = float(-np.log(max(p[target], 1e-300)))
    dlogits = p.copy()
    dlogits[target] -= 1.0
    dlogits = dlogits[None, :]

    d_classifier = cache.readout.T @ dlogits
    d_readout = (dlogits @ model.classifier.T)[0]

    # Split the readout gradient into per-layer segments.
    segments = []
    pos = 0
    for H in cache.layer_outputs:
        w = H.shape[1]
        segments.append(d_readout[pos:pos + w])
        pos += w

    weight_grads = [[None] * len(mp.mlp) for mp in model.mp_layers]
    eps_grads = [None] * len(model.mp_layers)
    dzs = [[None] * len(mp.mlp) for mp in model.mp_layers]

    d_h = np.tile(segments[-1], (n, 1))  # gradient wrt H_K from the readout
    for k in range(len(model.mp_layers) - 1, -1, -1):
        mp = model.mp_layers[k]
        g = d_h
        for j in range(len(mp.mlp) - 1, -1, -1):
            dz = g * act_prime(cache.zs[k][j])
            dzs[k][j] = dz
            weight_grads[k][j] = (cache.mlp_inputs[k][j].T @ dz) * mp.mlp[j].mask
            g = dz @ mp.mlp[j].effective().T
        # g is now the gradient wrt Agg @ H_{k-1}.
        if mp.variant == "gin" and mp.train_epsilon:
            eps_grads[k] = float(np.sum(g * cache.layer_outputs[k]))
        d_prev = cache.aggs[k].T @ g
        if k > 0:
            d_h = np.tile(segments[k], (n, 1)) + d_prev

    grads = Gradients(weights=weight_grads, epsilons=eps_grads, classifier=d_classifier)
    return loss, grads, dzs


# ---------------------------------------------------------------------------
# Adam with mask-respecting updates
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def adam_init(params) -> AdamState:
    return AdamState(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float = 0.01,
              beta1: float = 0.9, beta2: float = 0.999, eps_adam: float = 1e-8,
              masks=None):
    """One bias-corrected Adam step, in place; masked coordinates stay exactly 0."""
    state.t += 1
    t = state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"param/grad shape mismatch: {p.shape} vs {g.shape}")
        if masks is not None and masks[i] is not None:
            g = g * masks[i]
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g * g
        m_hat = state.m[i] / (1 - beta1 ** t)
        v_hat = state.v[i] / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps_adam)
        if masks is not None and masks[i] is not None:
            p *= masks[i]
    return params, state


def _collect_params(model: GnnModel):
    """Flat parameter/mask views plus epsilon boxes for in-place optimization."""
    params, masks, eps_boxes = [], [], []
    for mp in model.mp_layers:
        for layer in mp.mlp:
            params.append(layer.weights)
            masks.append(layer.mask)
    for mp in model.mp_layers:
        if mp.variant == "gin" and mp.train_epsilon:
            box = np.array([mp.epsilon])
            params.append(box)
            masks.append(None)
            eps_boxes.append((mp, box))
    params.append(model.classifier)
    masks.append(None)
    return params, masks, eps_boxes


def _collect_grads(model: GnnModel, grads: Gradients):
    flat = []
    for mp_grads in grads.weights:
        flat.extend(mp_grads)
    for k, mp in enumerate(model.mp_layers):
        if mp.variant == "gin" and mp.train_epsilon:
            flat.append(np.array([grads.epsilons[k] or 0.0]))
    flat.append(grads.classifier)
    return flat


def accumulate(total: Gradients, part: Gradients) -> Gradients:
    if total is None:
        return part
    return Gradients(
        weights=[[a + b for a, b in zip(ta, pa)] for ta, pa in zip(total.weights, part.weights)],
        epsilons=[
            None if a is None and b is None else (a or 0.0) + (b or 0.0)
            for a, b in zip(total.epsilons, part.epsilons)
        ],
        classifier=total.classifier + part.classifier,
    )


def train(model: GnnModel, train_data: Dataset, epochs: int = 250, batch_size: int = 32,
          lr: float = 0.01, rng: np.random.Generator = None,
          beta1: float = 0.9, beta2: float = 0.999, eps_adam: float = 1e-8):
    """Mini-batch Adam training; mutates the model and returns (model, loss trace).

    The batch loss is the mean cross-entropy, shuffling is driven by ``rng``,
    and only unmasked weights ever change.
    """
    if len(train_data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if rng is None:
        rng = np.random.default_rng(0)
    # Keep masked raw weights at exactly zero so checkpoints match effectives.
    for mp in model.mp_layers:
        for layer in mp.mlp:
            layer.weights *= layer.mask
    params, masks, eps_boxes = _collect_params(model)
    state = adam_init(params)
    losses = []
    n = len(train_data)
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            total = None
            batch_loss = 0.0
            for i in batch:
                g = train_data[int(i)]
                loss, grads = backward(model, g, g.label)
                batch_loss += loss
                total = accumulate(total, grads)
            total = total.scaled(1.0 / len(batch))
            epoch_loss += batch_loss
            flat = _collect_grads(model, total)
            adam_step(params, flat, state, lr=lr, beta1=beta1, beta2=beta2,
                      eps_adam=eps_adam, masks=masks)
            for mp, box in eps_boxes:
                mp.epsilon = float(box[0])
        losses.append(epoch_loss / n)
    return model, losses


def evaluate(model: GnnModel, data: Dataset) -> float:
    """Classification accuracy; argmax ties break toward the lower class index."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    correct = 0
    for g in data:
        logits = forward(model, g).logits[0]
        if int(np.argmax(logits)) == g.label:
            correct += 1
    return correct / len(data)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def _pack_mask(mask: np.ndarray) -> str:
    return base64.b64encode(np.packbits(mask.astype(np.uint8).ravel()).tobytes()).decode("ascii")


def _unpack_mask(data: str, shape) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(base64.b64decode(data), dtype=np.uint8))
    return bits[: shape[0] * shape[1]].reshape(shape).astype(np.float64)


def model_to_dict(model: GnnModel) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "activation": model.activation,
        "alpha": model.alpha,
        "feature_dim": model.feature_dim,
        "num_classes": model.num_classes,
        "classifier": model.classifier.tolist(),
        "mp_layers": [
            {
                "variant": mp.variant,
                "epsilon": mp.epsilon,
                "train_epsilon": mp.train_epsilon,
                "mlp": [
                    {
                        "shape": list(layer.weights.shape),
                        "weights": layer.weights.tolist(),
                        "mask": _pack_mask(layer.mask),
                    }
                    for layer in mp.mlp
                ],
            }
            for mp in model.mp_layers
        ],
    }


def model_from_dict(d: dict) -> GnnModel:
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
    mp_layers = []
    for mp in d["mp_layers"]:
        mlp = [
            MlpLayer(
                weights=np.array(layer["weights"], dtype=np.float64),
                mask=_unpack_mask(layer["mask"], tuple(layer["shape"])),
            )
            for layer in mp["mlp"]
        ]
        mp_layers.append(MpLayer(mlp=mlp, variant=mp["variant"], epsilon=mp["epsilon"],
                                 train_epsilon=mp["train_epsilon"]))
    return GnnModel(
        mp_layers=mp_layers,
        classifier=np.array(d["classifier"], dtype=np.float64),
        activation=d["activation"],
        alpha=d["alpha"],
        feature_dim=d["feature_dim"],
        num_classes=d["num_classes"],
    )


def save_checkpoint(model: GnnModel, path: str):
    with open(path, "w", newline="\n") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str) -> GnnModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
