"""Pruning-mask generation and analysis.

Covers i.i.d. Bernoulli masks, computational-path enumeration and counting,
the exact first-layer irrecoverability test, empirical critical-path probes,
and the layer-wise injectivity-preserving sparsifier.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import gnn
from .graphs import Dataset, Graph
from .tensor import FLOAT32_EPS, ShapeError, make_rng


class PathCapError(ValueError):
    """Raised when a full path listing would exceed the configured cap."""


@dataclass
class MaskSet:
    """Per-MP-layer, per-MLP-layer binary masks."""
    masks: list  # list (MP layers) of list (MLP layers) of binary arrays
    rho_nominal: float = 0.0

    @property
    def rho_realized(self) -> float:
        total = sum(m.size for mp in self.masks for m in mp)
        zeros = sum(int((m == 0).sum()) for mp in self.masks for m in mp)
        return zeros / total if total else 0.0

    def copy(self) -> "MaskSet":
        return MaskSet(masks=[[m.copy() for m in mp] for mp in self.masks],
                       rho_nominal=self.rho_nominal)


def mask_shapes(model: gnn.GnnModel):
    return [[layer.weights.shape for layer in mp.mlp] for mp in model.mp_layers]


def all_ones_mask(model: gnn.GnnModel) -> MaskSet:
    return MaskSet(masks=[[np.ones(s) for s in mp] for mp in mask_shapes(model)],
                   rho_nominal=0.0)


def random_mask(model: gnn.GnnModel, rho: float, rng: np.random.Generator,
                method: str = "bernoulli") -> MaskSet:
    """Random pruning mask at sparsity rho.

    ``bernoulli`` sets each coordinate to zero independently with probability
    rho (the canonical generator). ``fixed_count`` zeroes exactly
    ceil(rho * size) coordinates per layer; it is a low-variance, non-canonical
    variant for sweeps.
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    masks = []
    for mp in mask_shapes(model):
        layer_masks = []
        for shape in mp:
            if method == "bernoulli":
                m = (rng.random(shape) >= rho).astype(np.float64)
            elif method == "fixed_count":
                size = shape[0] * shape[1]
                n_zero = int(np.ceil(rho * size)) if rho > 0 else 0
                flat = np.ones(size)
                flat[rng.choice(size, size=n_zero, replace=False)] = 0.0
                m = flat.reshape(shape)
            else:
                raise ValueError(f"unknown mask method {method!r}")
            layer_masks.append(m)
        masks.append(layer_masks)
    return MaskSet(masks=masks, rho_nominal=rho)


def apply_mask_set(model: gnn.GnnModel, mask_set: MaskSet) -> gnn.GnnModel:
    """Install masks on the model in place; pruned weights are zeroed."""
    if len(mask_set.masks) != len(model.mp_layers):
        raise ShapeError("mask set does not match model depth")
    for mp, mp_masks in zip(model.mp_layers, mask_set.masks):
        if len(mp_masks) != len(mp.mlp):
            raise ShapeError("mask set does not match MLP depth")
        for layer, m in zip(mp.mlp, mp_masks):
            if m.shape != layer.weights.shape:
                raise ShapeError(f"mask shape {m.shape} != weights {layer.weights.shape}")
            layer.mask = m.copy()
            layer.weights = layer.weights * layer.mask
    return model


# ---------------------------------------------------------------------------
# Computational paths
# ---------------------------------------------------------------------------

def count_paths(mlp_masks) -> tuple:
    """(alive, total) input-to-output path counts via dynamic programming."""
    total = 1
    widths = [mlp_masks[0].shape[0]] + [m.shape[1] for m in mlp_masks]
    for w in widths:
        total *= w
    v = np.ones(widths[0])
    for m in mlp_masks:
        v = v @ m
    return int(round(v.sum())), total


@dataclass
class PathSet:
    total: int
    alive: int
    paths: list = None  # optional listing of alive paths as (layer, in, out) edge tuples


def enumerate_paths(mlp_masks, cap: int = 10 ** 6, include_listing: bool = True) -> PathSet:
    """Exact alive/total path statistics with an optional full listing.

    Raises PathCapError when the path space exceeds ``cap``; use count_paths
    for the DP counts without a listing.
    """
    alive, total = count_paths(mlp_masks)
    if not include_listing:
        return PathSet(total=total, alive=alive)
    if total > cap:
        raise PathCapError(
            f"{total} paths exceed the cap of {cap}; use count_paths for counting-only mode"
        )
    paths = []

    def walk(layer, neuron, edges):
        if layer == len(mlp_masks):
            paths.append(tuple(edges))
            return
        m = mlp_masks[layer]
        for out in range(m.shape[1]):
            if m[neuron, out] != 0:
                edges.append((layer, neuron, out))
                walk(layer + 1, out, edges)
                edges.pop()

    for start in range(mlp_masks[0].shape[0]):
        walk(0, start, [])
    return PathSet(total=total, alive=alive, paths=paths)


def path_alive(path, mlp_masks) -> bool:
    return all(mlp_masks[layer][i, j] != 0 for layer, i, j in path)


# ---------------------------------------------------------------------------
# Irrecoverability (first layer of the first MP layer's MLP)
# ---------------------------------------------------------------------------

def is_irrecoverable_first_layer(g1: Graph, g2: Graph, permutation, mask,
                                 variant: str = "gin", epsilon: float = 0.0) -> bool:
    """Exact first-layer irrecoverability test for a structurally isomorphic pair.

    True iff Agg1 X1 M equals the permutation-aligned Agg2 X2 M exactly, in
    which case the first layer's outputs coincide for every weight matrix and
    the pair stays indistinguishable for the rest of the forward pass.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape[0] != g1.features.shape[1]:
        raise ShapeError(f"mask rows {mask.shape[0]} != feature dim {g1.features.shape[1]}")
    if g1.node_count != g2.node_count:
        raise ShapeError("graphs must have the same node count")
    layer = gnn.MpLayer(mlp=[], variant=variant, epsilon=epsilon)
    agg1 = gnn.aggregation_matrix(layer, g1.adjacency)
    agg2 = gnn.aggregation_matrix(layer, g2.adjacency)
    perm = np.asarray(permutation, dtype=int)
    lhs = agg1 @ g1.features @ mask
    rhs = (agg2 @ g2.features @ mask)[perm]
    return np.array_equal(lhs, rhs)


# ---------------------------------------------------------------------------
# Empirical critical-path probe
# ---------------------------------------------------------------------------

def probe_critical_paths(model: gnn.GnnModel, dataset: Dataset, candidate_edges,
                         epochs: int = 50, restarts: int = 3, lr: float = 0.01,
                         batch_size: int = 32, seed: int = 0):
    """Retrain-with-edge-removed probe; evidence about criticality, not proof.

    Each candidate edge (mp_index, mlp_index, in, out) is masked on a copy of
    the model sharing the baseline initialization, retrained ``restarts``
    times with different shuffle streams, and its best accuracy is reported
    next to the baseline's.
    """
    if epochs < 1 or restarts < 1:
        raise ValueError("training budget must be positive")

    def best_accuracy(m: gnn.GnnModel) -> float:
        best = 0.0
        for r in range(restarts):
            trial = m.copy()
            gnn.train(trial, dataset, epochs=epochs, batch_size=batch_size, lr=lr,
                      rng=make_rng(seed, stream=r + 1))
            best = max(best, gnn.evaluate(trial, dataset))
        return best

    baseline = best_accuracy(model)
    report = {}
    for edge in candidate_edges:
        mp_idx, mlp_idx, i, j = edge
        pruned = model.copy()
        layer = pruned.mp_layers[mp_idx].mlp[mlp_idx]
        layer.mask = layer.mask.copy()
        layer.mask[i, j] = 0.0
        layer.weights = layer.weights * layer.mask
        report[edge] = {"accuracy_with": baseline, "accuracy_without": best_accuracy(pruned)}
    return report


# ---------------------------------------------------------------------------
# Injectivity-preserving sparsifier
# ---------------------------------------------------------------------------

def _distinct_rows(rows: np.ndarray, tol: float) -> np.ndarray:
    """Representative subset of rows that are pairwise distinguishable at tol."""
    kept = []
    for idx in range(rows.shape[0]):
        r = rows[idx]
        scale = max(1.0, float(np.max(np.abs(r))) if r.size else 0.0)
        if all(np.max(np.abs(r - rows[k])) > tol * scale for k in kept):
            kept.append(idx)
    return rows[kept]


def _layer_inputs(model: gnn.GnnModel, dataset: Dataset, mp_idx: int, mlp_idx: int) -> np.ndarray:
    rows = [gnn.forward(model, g).mlp_inputs[mp_idx][mlp_idx] for g in dataset]
    return np.vstack(rows)


def _layer_injective(inputs: np.ndarray, layer: gnn.MlpLayer, act, tol: float) -> bool:
    distinct = _distinct_rows(inputs, tol)
    outputs = act(distinct @ layer.effective())
    for i in range(outputs.shape[0]):
        scale_i = max(1.0, float(np.max(np.abs(outputs[i]))))
        for j in range(i + 1, outputs.shape[0]):
            if np.max(np.abs(outputs[i] - outputs[j])) <= tol * scale_i:
                return False
    return True


def _all_layers_injective(model: gnn.GnnModel, dataset: Dataset, act, tol: float) -> bool:
    for mp_idx, mp in enumerate(model.mp_layers):
        for mlp_idx, layer in enumerate(mp.mlp):
            inputs = _layer_inputs(model, dataset, mp_idx, mlp_idx)
            if not _layer_injective(inputs, layer, act, tol):
                return False
    return True


def injectivity_preserving_sparsify(model: gnn.GnnModel, dataset: Dataset,
                                    rho_step: float = 0.1, k_trials: int = 10,
                                    rng: np.random.Generator = None,
                                    tol: float = FLOAT32_EPS, rho_cap: float = 0.95):
    """Layer-wise greedy sparsification keeping every layer injective on its
    realized input set.

    Starting at the first MLP layer of the first MP layer, the target sparsity
    is raised in ``rho_step`` increments; at each increment up to ``k_trials``
    Bernoulli masks are sampled and the first that keeps every layer of the
    pipeline injective (at FLOAT32 tolerance on the dataset's realized inputs)
    is kept. A layer stops when all ``k_trials`` samples at an increment fail.
    Worst case the all-ones masks come back.

    Returns (MaskSet, per-layer achieved sparsities). Mutates the model: the
    accepted masks are installed as the search proceeds so later layers see
    realized inputs under the earlier decisions.
    """
    if k_trials < 1:
        raise ValueError("k_trials must be >= 1")
    if rng is None:
        rng = make_rng(0)
    act, _ = gnn.activation_pair(model.activation, model.alpha)
    if not _all_layers_injective(model, dataset, act, tol):
        raise ValueError("model is not layer-injective on this dataset before sparsification")
    achieved = []
    for mp_idx, mp in enumerate(model.mp_layers):
        for mlp_idx, layer in enumerate(mp.mlp):
            best_mask = layer.mask.copy()
            best_rho = 0.0
            rho = rho_step
            while rho < rho_cap + 1e-12:
                found = None
                for _ in range(k_trials):
                    candidate = (rng.random(layer.weights.shape) >= rho).astype(np.float64)
                    # Install tentatively: pruning this layer rescales every
                    # downstream activation, so the whole pipeline must stay
                    # injective, not just this layer's map.
                    layer.mask = candidate
                    if _all_layers_injective(model, dataset, act, tol):
                        found = candidate
                        break
                layer.mask = best_mask
                if found is None:
                    break
                best_mask, best_rho = found, rho
                layer.mask = best_mask
                rho += rho_step
            layer.mask = best_mask
            layer.weights = layer.weights * layer.mask
            achieved.append(best_rho)
    mask_set = MaskSet(masks=[[l.mask.copy() for l in mp.mlp] for mp in model.mp_layers],
                       rho_nominal=float(np.mean(achieved)) if achieved else 0.0)
    # Postcondition: re-check full-dataset injectivity layer by layer.
    for mp_idx, mp in enumerate(model.mp_layers):
        for mlp_idx, layer in enumerate(mp.mlp):
            inputs = _layer_inputs(model, dataset, mp_idx, mlp_idx)
            if not _layer_injective(inputs, layer, act, tol):
                raise AssertionError("sparsifier postcondition violated: layer not injective")
    return mask_set, achieved


# ---------------------------------------------------------------------------
# Serialization: bit-packed masks with a shape header
# ---------------------------------------------------------------------------

MASK_MAGIC = b"SGMK"


def mask_set_to_bytes(mask_set: MaskSet) -> bytes:
    out = [MASK_MAGIC, struct.pack("<Bd", len(mask_set.masks), mask_set.rho_nominal)]
    for mp in mask_set.masks:
        out.append(struct.pack("<B", len(mp)))
        for m in mp:
            out.append(struct.pack("<II", *m.shape))
            out.append(np.packbits(m.astype(np.uint8).ravel()).tobytes())
    return b"".join(out)


def mask_set_from_bytes(data: bytes) -> MaskSet:
    if data[:4] != MASK_MAGIC:
        raise ValueError("not a mask-set blob")
    pos = 4
    n_mp, rho = struct.unpack_from("<Bd", data, pos)
    pos += struct.calcsize("<Bd")
    masks = []
    for _ in range(n_mp):
        (n_layers,) = struct.unpack_from("<B", data, pos)
        pos += 1
        mp = []
        for _ in range(n_layers):
            rows, cols = struct.unpack_from("<II", data, pos)
            pos += 8
            n_bytes = (rows * cols + 7) // 8
            bits = np.unpackbits(np.frombuffer(data[pos:pos + n_bytes], dtype=np.uint8))
            pos += n_bytes
            mp.append(bits[: rows * cols].reshape(rows, cols).astype(np.float64))
        masks.append(mp)
    return MaskSet(masks=masks, rho_nominal=rho)


def save_mask_set(mask_set: MaskSet, path: str):
    with open(path, "wb") as fh:
        fh.write(mask_set_to_bytes(mask_set))


def load_mask_set(path: str) -> MaskSet:
    with open(path, "rb") as fh:
        return mask_set_from_bytes(fh.read())
