"""Expressivity measurement and verification of the probabilistic bounds.

tau is the fraction of isomorphism-type representatives whose final-MP-layer
graph sums are pairwise distinguishable at the FLOAT32 threshold. The bound
calculators implement the layer/MLP/GNN injectivity probabilities and the
accuracy ceiling exactly, returning both raw (possibly negative) and clamped
values; Monte Carlo helpers provide independent sampling cross-checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import gnn, wl
from .graphs import Dataset, Graph
from .pruning import random_mask, apply_mask_set
from .tensor import FLOAT32_EPS, uniform_init


# ---------------------------------------------------------------------------
# tau
# ---------------------------------------------------------------------------

def final_layer_graph_sum(model: gnn.GnnModel, graph: Graph) -> np.ndarray:
    """Sum of final-MP-layer node embeddings (not the concatenated readout)."""
    return gnn.forward(model, graph).layer_outputs[-1].sum(axis=0)


def _sums_indistinguishable(a: np.ndarray, b: np.ndarray, tol: float, relative: bool) -> bool:
    diff = float(np.max(np.abs(a - b)))
    if relative:
        scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
        return diff <= tol * scale
    return diff <= tol


REPORT_VERSION = 1


@dataclass
class ExpressivityReport:
    tau: float
    representatives: list
    indistinguishable_pairs: list
    tolerance: float
    relative: bool
    degenerate: bool = False
    node_multisets: bool = False

    def to_json(self) -> str:
        import json

        return json.dumps({
            "version": REPORT_VERSION,
            "tau": self.tau,
            "representatives": list(map(int, self.representatives)),
            "indistinguishable_pairs": [[int(a), int(b)] for a, b in self.indistinguishable_pairs],
            "tolerance": self.tolerance,
            "relative": self.relative,
            "degenerate": self.degenerate,
            "node_multisets": self.node_multisets,
        }, sort_keys=True)


def _node_multisets_indistinguishable(h1: np.ndarray, h2: np.ndarray,
                                      tol: float, relative: bool) -> bool:
    if h1.shape != h2.shape:
        return False
    a = h1[np.lexsort(h1.T[::-1])]
    b = h2[np.lexsort(h2.T[::-1])]
    return _sums_indistinguishable(a.ravel(), b.ravel(), tol, relative)


def measure_tau(model: gnn.GnnModel, dataset: Dataset, representatives,
                tolerance: float = FLOAT32_EPS, relative: bool = True,
                node_multisets: bool = False) -> ExpressivityReport:
    """tau over the given isomorphism-type representatives.

    A representative counts as distinguishable iff its final-layer graph sum
    differs from every other representative's at the tolerance. Fewer than two
    representatives yield tau = 1 by convention, flagged degenerate.
    ``node_multisets`` switches to comparing sorted node-embedding multisets
    instead of graph sums; that mode is non-canonical and marked in the report.
    """
    reps = list(representatives)
    if len(reps) < 2:
        return ExpressivityReport(tau=1.0, representatives=reps, indistinguishable_pairs=[],
                                  tolerance=tolerance, relative=relative, degenerate=True,
                                  node_multisets=node_multisets)
    if node_multisets:
        embs = [gnn.forward(model, dataset[i]).layer_outputs[-1] for i in reps]

        def same(a, b):
            return _node_multisets_indistinguishable(embs[a], embs[b], tolerance, relative)
    else:
        sums = [final_layer_graph_sum(model, dataset[i]) for i in reps]

        def same(a, b):
            return _sums_indistinguishable(sums[a], sums[b], tolerance, relative)

    bad_pairs = []
    collided = set()
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            if same(a, b):
                bad_pairs.append((reps[a], reps[b]))
                collided.add(reps[a])
                collided.add(reps[b])
    tau = (len(reps) - len(collided)) / len(reps)
    return ExpressivityReport(tau=tau, representatives=reps, indistinguishable_pairs=bad_pairs,
                              tolerance=tolerance, relative=relative,
                              node_multisets=node_multisets)


# ---------------------------------------------------------------------------
# Gradient diversity
# ---------------------------------------------------------------------------

def gradient_diversity(grads, mp_layer: int = 0, mlp_layer: int = 0) -> float:
    """(sum of squared Frobenius norms) / (squared norm of the sum).

    ``grads`` is a sequence of per-example gradient matrices, or Gradients
    objects from which the (mp_layer, mlp_layer) weight gradient is taken.
    Zero denominator with nonzero numerator reports +inf; all-zero gradients
    are undefined and raise.
    """
    mats = [
        g.weights[mp_layer][mlp_layer] if isinstance(g, gnn.Gradients) else np.asarray(g, dtype=np.float64)
        for g in grads
    ]
    if not mats:
        raise ValueError("need at least one gradient")
    num = sum(float(np.sum(m * m)) for m in mats)
    total = sum(mats[1:], start=mats[0].copy())
    den = float(np.sum(total * total))
    if den == 0.0:
        if num == 0.0:
            raise ValueError("gradient diversity undefined for all-zero gradients")
        return math.inf
    return num / den


@dataclass
class ZetaBound:
    """Gradient-diversity bound interval for a two-graph pair."""
    zeta_plus: float
    zeta_minus: float          # inf when the interval is [zeta_plus, inf)
    cos_sq_sum: float
    abs_cos_sum: float
    cross_magnitude: float
    grad_norm_sq_sum: float
    excluded_rows: int
    upper_unbounded: bool

    def contains(self, ds: float, slack: float = 1e-9) -> bool:
        if ds < self.zeta_plus * (1.0 - slack) - slack:
            return False
        if self.upper_unbounded:
            return True
        return ds <= self.zeta_minus * (1.0 + slack) + slack


def gdiv_lower_bound(h1, h2, a1, a2, dz1, dz2, m_cap=None, row_tol: float = 1e-12) -> ZetaBound:
    """Closed-form zeta interval from the embedding geometry of two graphs.

    ``h1, h2`` are the layer inputs H^(l-1), ``a1, a2`` the aggregation
    matrices and ``dz1, dz2`` the loss gradients at the layer pre-activation.
    Rows with norm below ``row_tol`` are excluded from the cosine sum and
    counted; the norm constant M is the largest observed squared row norm
    unless ``m_cap`` overrides it. The cross term carries a factor 2 because
    the squared norm of a gradient sum expands as
    ||G1 + G2||^2 = ||G1||^2 + ||G2||^2 + 2<G1, G2>, and M sqrt(sum cos^2)
    ||B||_F bounds |<G1, G2>| once, not twice.
    """
    h1, h2 = np.asarray(h1, float), np.asarray(h2, float)
    n1 = np.linalg.norm(h1, axis=1)
    n2 = np.linalg.norm(h2, axis=1)
    keep1, keep2 = n1 > row_tol, n2 > row_tol
    excluded = int((~keep1).sum() + (~keep2).sum())
    if not keep1.any() or not keep2.any():
        raise ValueError("all embedding rows excluded; zeta bound undefined")
    r1, r2 = h1[keep1], h2[keep2]
    cos = (r1 @ r2.T) / np.outer(n1[keep1], n2[keep2])
    cos_sq_sum = float(np.sum(cos * cos))
    abs_cos_sum = float(np.sum(np.abs(cos)))
    m_const = float(max(np.max(n1[keep1] ** 2), np.max(n2[keep2] ** 2)))
    if m_cap is not None:
        m_const = float(m_cap)

    g1 = h1.T @ np.asarray(a1, float).T @ np.asarray(dz1, float)
    g2 = h2.T @ np.asarray(a2, float).T @ np.asarray(dz2, float)
    num = float(np.sum(g1 * g1) + np.sum(g2 * g2))
    b = np.asarray(a2, float).T @ np.asarray(dz2, float) @ np.asarray(dz1, float).T @ np.asarray(a1, float)
    cross = 2.0 * m_const * math.sqrt(cos_sq_sum) * float(np.linalg.norm(b, "fro"))

    if num == 0.0:
        raise ValueError("both gradients vanish; zeta bound undefined")
    zeta_plus = num / (num + cross)
    upper_unbounded = num < cross
    zeta_minus = math.inf if upper_unbounded or num == cross else num / (num - cross)
    return ZetaBound(zeta_plus=zeta_plus, zeta_minus=zeta_minus, cos_sq_sum=cos_sq_sum,
                     abs_cos_sum=abs_cos_sum, cross_magnitude=cross, grad_norm_sq_sum=num,
                     excluded_rows=excluded, upper_unbounded=upper_unbounded)


def pair_gradient_geometry(model: gnn.GnnModel, g1: Graph, t1: int, g2: Graph, t2: int,
                           mp_layer: int = 0):
    """Everything gdiv_lower_bound needs for two graphs, plus the measured
    diversity of the pair's first-MLP-layer weight gradients."""
    loss1, grads1, dzs1 = gnn.backward_internals(model, g1, t1)
    loss2, grads2, dzs2 = gnn.backward_internals(model, g2, t2)
    c1, c2 = gnn.forward(model, g1), gnn.forward(model, g2)
    ds = gradient_diversity([grads1, grads2], mp_layer=mp_layer, mlp_layer=0)
    return {
        "h1": c1.layer_outputs[mp_layer], "h2": c2.layer_outputs[mp_layer],
        "a1": c1.aggs[mp_layer], "a2": c2.aggs[mp_layer],
        "dz1": dzs1[mp_layer][0], "dz2": dzs2[mp_layer][0],
        "measured_ds": ds,
    }


# ---------------------------------------------------------------------------
# Non-colinearity (Monte Carlo)
# ---------------------------------------------------------------------------

@dataclass
class ColinearityReport:
    rate: float
    colinear_pairs: int
    total_pairs: int
    trials: int


def _reinitialize(model: gnn.GnnModel, rng: np.random.Generator) -> gnn.GnnModel:
    fresh = model.copy()
    for mp in fresh.mp_layers:
        for layer in mp.mlp:
            r, c = layer.weights.shape
            layer.weights = uniform_init(r, c, r, rng)
            layer.mask = np.ones_like(layer.weights)
    rd, nc = fresh.classifier.shape
    fresh.classifier = uniform_init(rd, nc, rd, rng)
    return fresh


def noncolinearity_check(model: gnn.GnnModel, dataset: Dataset, trials: int,
                         rng: np.random.Generator, rho: float = 0.5,
                         angle_tol: float = 1e-6) -> ColinearityReport:
    """Rate of colinear final-layer embeddings across WL-distinguishable nodes.

    Each trial redraws the weights and a Bernoulli(rho) mask. Node pairs
    (pooled over all graphs) with different WL colors count as colinear when
    their embedding vectors are parallel within ``angle_tol`` radians. Colors
    are taken at as many refinement iterations as the model has MP layers: an
    L-layer model is at most as expressive as L-iteration WL, so deeper colors
    would flag pairs no L-layer model can separate.
    """
    if any(layer.weights.shape[1] == 0 for mp in model.mp_layers for layer in mp.mlp):
        raise ValueError("model has a zero-width layer")
    _warn_if_underparameterized(model, dataset, rho)
    depth = len(model.mp_layers)
    assignments = wl.refine_joint(list(dataset.graphs), max_iterations=depth)
    colors = np.concatenate([
        a.history[min(depth, len(a.history) - 1)] for a in assignments
    ])
    cos_cut = math.cos(angle_tol)
    colinear = total = 0
    for _ in range(trials):
        trial = _reinitialize(model, rng)
        apply_mask_set(trial, random_mask(trial, rho, rng))
        embs = np.vstack([gnn.forward(trial, g).layer_outputs[-1] for g in dataset])
        norms = np.linalg.norm(embs, axis=1)
        for i in range(len(colors)):
            for j in range(i + 1, len(colors)):
                if colors[i] == colors[j]:
                    continue
                total += 1
                if norms[i] < 1e-300 or norms[j] < 1e-300:
                    colinear += 1
                    continue
                c = abs(float(embs[i] @ embs[j])) / (norms[i] * norms[j])
                if c >= cos_cut:
                    colinear += 1
    rate = colinear / total if total else 0.0
    return ColinearityReport(rate=rate, colinear_pairs=colinear, total_pairs=total, trials=trials)


def _warn_if_underparameterized(model: gnn.GnnModel, dataset: Dataset, rho: float):
    inputs = np.vstack([gnn.forward(model, g).mlp_inputs[0][0] for g in dataset])
    distinct = np.unique(inputs, axis=0)
    n = distinct.shape[0]
    if n < 2 or not 0.0 < rho < 1.0:
        return
    k = realized_k(distinct)
    width = min(layer.weights.shape[1] for mp in model.mp_layers for layer in mp.mlp)
    needed = required_width(0.999, n, k, rho)
    if width < needed:
        warnings.warn(
            f"model width {width} below the m_min requirement {needed} "
            f"for N={n}, k={k}, rho={rho}",
            stacklevel=2,
        )


def realized_k(distinct_inputs: np.ndarray) -> int:
    """Minimum number of nonzero components over all pairwise input differences."""
    n = distinct_inputs.shape[0]
    if n < 2:
        raise ValueError("need at least two distinct inputs")
    best = distinct_inputs.shape[1]
    for i in range(n):
        for j in range(i + 1, n):
            nz = int(np.count_nonzero(distinct_inputs[i] - distinct_inputs[j]))
            best = min(best, nz)
    return max(best, 1)


# ---------------------------------------------------------------------------
# Closed-form bounds
# ---------------------------------------------------------------------------

@dataclass
class BoundValue:
    raw: float
    clamped: float = field(init=False)

    def __post_init__(self):
        self.clamped = min(1.0, max(0.0, self.raw))


def injectivity_bound(n_inputs: int, rho: float, k: int, m: int) -> BoundValue:
    """Single-layer injectivity probability 1 - C(N,2) rho^(k m)."""
    _check_bound_domain(n_inputs, rho, k, m)
    return BoundValue(raw=1.0 - math.comb(n_inputs, 2) * rho ** (k * m))


def mlp_bound(gamma_layer: float, depth: int) -> BoundValue:
    """MLP-level injectivity probability gamma_layer ** depth."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return BoundValue(raw=gamma_layer ** depth)


def gnn_bound(dataset_size: int, max_nodes: int, rho: float, k: int, m_min: int,
              depth: int, mp_layers: int) -> BoundValue:
    """Whole-GNN injectivity probability (1 - C(|D| N, 2) rho^(k m_min))^(L M)."""
    _check_bound_domain(dataset_size * max_nodes, rho, k, m_min)
    if depth < 1 or mp_layers < 1:
        raise ValueError("depth and mp_layers must be >= 1")
    per_layer = 1.0 - math.comb(dataset_size * max_nodes, 2) * rho ** (k * m_min)
    return BoundValue(raw=per_layer ** (depth * mp_layers))


def required_width(gamma: float, n_inputs: int, k: int, rho: float) -> int:
    """Smallest integer width m with 1 - C(N,2) rho^(k m) >= gamma."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    _check_bound_domain(n_inputs, rho, k, 1)
    m = math.log((1.0 - gamma) / math.comb(n_inputs, 2)) / math.log(rho) / k
    return max(1, math.ceil(m))


def _check_bound_domain(n_inputs: int, rho: float, k: int, m: int):
    if n_inputs < 2:
        raise ValueError("need at least two inputs")
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must be in (0, 1)")
    if k < 1 or m < 1:
        raise ValueError("k and m must be >= 1")


def accuracy_ceiling(num_classes: int, indistinguishable_types: int, total_types: int) -> float:
    """Maximum accuracy 1 - (1 - 1/C) U/I under uniform class distribution."""
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if total_types < 1:
        raise ValueError("total_types must be >= 1")
    if not 0 <= indistinguishable_types <= total_types:
        raise ValueError("need 0 <= U <= I")
    return 1.0 - (1.0 - 1.0 / num_classes) * indistinguishable_types / total_types


@dataclass
class BoundReport:
    n_inputs: int
    rho: float
    k: int
    m: int
    depth: int
    mp_layers: int
    dataset_size: int
    max_nodes: int
    gamma: BoundValue
    gamma_mlp: BoundValue
    gamma_gnn: BoundValue
    m_min: int
    ceiling: float = None

    def to_json(self) -> str:
        import json

        return json.dumps({
            "version": REPORT_VERSION,
            "n_inputs": self.n_inputs, "rho": self.rho, "k": self.k, "m": self.m,
            "depth": self.depth, "mp_layers": self.mp_layers,
            "dataset_size": self.dataset_size, "max_nodes": self.max_nodes,
            "gamma": {"raw": self.gamma.raw, "clamped": self.gamma.clamped},
            "gamma_mlp": {"raw": self.gamma_mlp.raw, "clamped": self.gamma_mlp.clamped},
            "gamma_gnn": {"raw": self.gamma_gnn.raw, "clamped": self.gamma_gnn.clamped},
            "m_min": self.m_min,
            "ceiling": self.ceiling,
        }, sort_keys=True)


def bound_report(n_inputs: int, rho: float, k: int, m: int, depth: int = 2,
                 mp_layers: int = 2, dataset_size: int = 1, max_nodes: int = None,
                 gamma_target: float = 0.99, num_classes: int = None,
                 indistinguishable_types: int = None, total_types: int = None) -> BoundReport:
    max_nodes = n_inputs if max_nodes is None else max_nodes
    gamma = injectivity_bound(n_inputs, rho, k, m)
    m_min = required_width(gamma_target, n_inputs, k, rho)
    ceiling = None
    if num_classes is not None and total_types is not None:
        ceiling = accuracy_ceiling(num_classes, indistinguishable_types or 0, total_types)
    return BoundReport(
        n_inputs=n_inputs, rho=rho, k=k, m=m, depth=depth, mp_layers=mp_layers,
        dataset_size=dataset_size, max_nodes=max_nodes,
        gamma=gamma,
        gamma_mlp=mlp_bound(gamma.raw, depth),
        gamma_gnn=gnn_bound(dataset_size, max_nodes, rho, k, max(m, 1), depth, mp_layers),
        m_min=m_min,
        ceiling=ceiling,
    )


# ---------------------------------------------------------------------------
# Monte Carlo oracle for the layer injectivity bound
# ---------------------------------------------------------------------------

def monte_carlo_injectivity(n_points: int, rho: float, k: int, m: int, trials: int,
                            rng: np.random.Generator):
    """Empirical injectivity rate of sigma(W' x) over a constructed input set.

    The input set realizes minimum pairwise difference support exactly k: one
    zero vector plus points supported on sliding windows of k coordinates with
    continuous entries. Collisions are exact events (W' delta identically
    zero), so the rate is an independent sampling estimate of the closed-form
    lower bound. Returns (rate, binomial_sigma).
    """
    _check_bound_domain(n_points, rho, k, m)
    n_cols = k + max(0, n_points - 2)
    supports = [None]  # x_0 is the zero vector
    for i in range(1, n_points):
        start = i - 1
        supports.append(list(range(start, start + k)))

    injective = 0
    chunk = 2000
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        w = rng.uniform(-1.0, 1.0, size=(t, m, n_cols))
        z = (rng.random((t, m, n_cols)) >= rho).astype(np.float64)
        x = np.zeros((t, n_points, n_cols))
        for i in range(1, n_points):
            x[:, i, supports[i]] = rng.uniform(0.5, 1.5, size=(t, k))
        wp = w * z
        y = np.einsum("tmn,tpn->tpm", wp, x)
        collide = np.zeros(t, dtype=bool)
        for u in range(n_points):
            for v in range(u + 1, n_points):
                d = y[:, u, :] - y[:, v, :]
                collide |= np.all(d == 0.0, axis=1)
        injective += int((~collide).sum())
        done += t
    rate = injective / trials
    sigma = math.sqrt(max(rate * (1.0 - rate), 1.0 / trials) / trials)
    return rate, sigma


# ---------------------------------------------------------------------------
# Criterion 1
# ---------------------------------------------------------------------------

def criterion1_check(model: gnn.GnnModel, dataset: Dataset, representatives=None,
                     tolerance: float = FLOAT32_EPS, relative: bool = True):
    """Pairs with different class labels that WL separates but the model does not.

    An empty list means the necessary condition for perfect classification
    holds on this dataset.
    """
    if representatives is None:
        representatives = wl.isomorphism_type_representatives(dataset).representatives
    reps = list(representatives)
    sums = {i: final_layer_graph_sum(model, dataset[i]) for i in reps}
    violations = []
    for a in range(len(reps)):
        for b in range(a + 1, len(reps)):
            i, j = reps[a], reps[b]
            if dataset[i].label == dataset[j].label:
                continue
            if not _sums_indistinguishable(sums[i], sums[j], tolerance, relative):
                continue
            if wl.wl_distinguishable(dataset[i], dataset[j]):
                violations.append((i, j))
    return violations
