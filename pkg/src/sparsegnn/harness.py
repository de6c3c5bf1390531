"""Experiment driver: pruning-ratio sweeps with dense twins, expressivity
bookkeeping, and aggregate statistics as CSV.

Each sweep cell (dataset, rho, seed) is a pure function of the config, so
reruns and resumes reproduce the exact same records and byte-identical CSV
output. Dense twins share the pruned model's initialization seed, isolating
the mask as the only difference.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

from . import expressivity, gnn, synth, wl
from .graphs import DataError, Dataset, parse_tudataset, split
from .pruning import all_ones_mask, apply_mask_set, random_mask
from .stats import pearson
from .tensor import make_rng


class ConfigError(ValueError):
    pass


DEFAULT_RHO_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_THETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
DEFAULT_KAPPA_GRID = (1.00, 0.92, 0.83, 0.75, 0.67, 0.58, 0.50, 0.42, 0.33, 0.25, 0.17, 0.08)


@dataclass
class ExperimentConfig:
    datasets: tuple = ("cycles-vs-paths", "synth-molecules")
    variant: str = "gin"
    mp_layers: int = 2
    hidden_width: int = None          # None -> feature dim
    mlp_depth: int = 2
    activation: str = "leaky_relu"
    alpha: float = 0.01
    rho_grid: tuple = DEFAULT_RHO_GRID
    seeds: int = 10
    epochs: int = 250
    batch_size: int = 32
    lr: float = 0.01
    split_fractions: tuple = (0.8, 0.1, 0.1)
    split_seed: int = 0
    wt_threshold: float = 0.05
    wt_absolute: bool = False         # flag: absolute accuracy difference rule
    tau_relative: bool = True
    theta_grid: tuple = DEFAULT_THETA_GRID
    theta_eps: float = 0.05
    kappa_grid: tuple = DEFAULT_KAPPA_GRID
    max_workers: int = 1

    def __post_init__(self):
        if self.variant not in ("gin", "gcn"):
            raise ConfigError(f"variant must be gin or gcn, got {self.variant!r}")
        if not 2 <= self.mp_layers <= 4:
            raise ConfigError("mp_layers must be in {2, 3, 4}")
        if self.mlp_depth < 1 or self.epochs < 1 or self.batch_size < 1 or self.seeds < 1:
            raise ConfigError("mlp_depth, epochs, batch_size, seeds must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if any(not 0.0 <= r < 1.0 for r in self.rho_grid):
            raise ConfigError("rho values must lie in [0, 1)")
        if not 0.0 < self.wt_threshold < 1.0:
            raise ConfigError("wt_threshold must be in (0, 1)")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or len(self.split_fractions) != 3:
            raise ConfigError("split_fractions must be three values summing to 1")
        if self.max_workers < 1:
            raise ConfigError("max_workers must be >= 1")


_TUPLE_FIELDS = {"datasets", "rho_grid", "theta_grid", "kappa_grid", "split_fractions"}


def load_config(path: str) -> ExperimentConfig:
    """Config from a JSON object or flat key=value lines ('#' comments)."""
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    else:
        raw = {}
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[key] = val
    return config_from_dict(raw, source=path)


def config_from_dict(raw: dict, source: str = "<config>") -> ExperimentConfig:
    spec = {f.name: f.type for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, val in raw.items():
        if key not in spec:
            raise ConfigError(f"{source}: unknown config key {key!r}")
        kwargs[key] = _coerce(key, val, source)
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _coerce(key, val, source):
    if isinstance(val, str):
        if key in _TUPLE_FIELDS:
            parts = [p.strip() for p in val.split(",") if p.strip()]
            if key == "datasets":
                return tuple(parts)
            return tuple(float(p) for p in parts)
        if key in ("wt_absolute", "tau_relative"):
            if val.lower() in ("true", "1", "yes"):
                return True
            if val.lower() in ("false", "0", "no"):
                return False
            raise ConfigError(f"{source}: {key} must be a boolean, got {val!r}")
        if key in ("variant", "activation"):
            return val
        if key == "hidden_width" and val.lower() in ("none", ""):
            return None
        try:
            return int(val) if "." not in val and "e" not in val.lower() else float(val)
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key}: {val!r}") from exc
    if key in _TUPLE_FIELDS and isinstance(val, list):
        return tuple(val)
    return val


def resolve_dataset(spec: str) -> Dataset:
    """'dir:NAME' loads a TUDataset from disk; otherwise a builtin name."""
    if ":" in spec:
        root, name = spec.rsplit(":", 1)
        return parse_tudataset(root, name)
    if spec in synth.BUILTIN_DATASETS:
        return synth.load_builtin(spec)
    raise DataError(f"unknown dataset {spec!r}; builtins: {sorted(synth.BUILTIN_DATASETS)}")


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    dataset: str
    seed: int
    rho_nominal: float
    rho_realized: float
    tau_pre: float
    tau_post: float
    a_clean: float
    a_post: float
    winning_ticket: bool
    wall_time: float = 0.0
    failed: bool = False
    error: str = ""


def is_winning(a_clean: float, a_post: float, threshold: float, absolute: bool = False) -> bool:
    if absolute:
        return (a_clean - a_post) < threshold
    if a_clean <= 0.0:
        return a_post >= a_clean
    return (a_clean - a_post) / a_clean < threshold


@dataclass
class _DatasetContext:
    name: str
    data: Dataset
    train: Dataset
    test: Dataset
    representatives: list


def _prepare(config: ExperimentConfig, name: str) -> _DatasetContext:
    data = resolve_dataset(name)
    data.validate_nontrivial()
    tr, va, te = split(data, config.split_fractions, config.split_seed)
    if len(te) == 0:
        # Datasets too small for a held-out split are scored on everything.
        te = data
    reps = wl.isomorphism_type_representatives(data).representatives
    return _DatasetContext(name=name, data=data, train=tr, test=te, representatives=reps)


def _build(config: ExperimentConfig, ctx: _DatasetContext, seed: int) -> gnn.GnnModel:
    return gnn.build_model(
        feature_dim=ctx.data.feature_dim,
        num_classes=ctx.data.num_classes,
        rng=make_rng(seed, stream=0),
        mp_layers=config.mp_layers,
        hidden_width=config.hidden_width,
        mlp_depth=config.mlp_depth,
        variant=config.variant,
        activation=config.activation,
        alpha=config.alpha,
    )


def _train_eval(config: ExperimentConfig, ctx: _DatasetContext, model: gnn.GnnModel, seed: int):
    model, _ = gnn.train(model, ctx.train, epochs=config.epochs, batch_size=config.batch_size,
                         lr=config.lr, rng=make_rng(seed, stream=1))
    return model, gnn.evaluate(model, ctx.test)


def _dense_twin(config: ExperimentConfig, ctx: _DatasetContext, seed: int, cache: dict):
    key = (ctx.name, seed)
    if key not in cache:
        model = _build(config, ctx, seed)
        apply_mask_set(model, all_ones_mask(model))
        cache[key] = _train_eval(config, ctx, model, seed)
    return cache[key]


def _tau(config, ctx, model) -> float:
    return expressivity.measure_tau(model, ctx.data, ctx.representatives,
                                    relative=config.tau_relative).tau


def _run_cell(config: ExperimentConfig, ctx: _DatasetContext, rho: float, rho_idx: int,
              seed: int, twin_cache: dict) -> RunRecord:
    start = time.monotonic()
    try:
        _, a_clean = _dense_twin(config, ctx, seed, twin_cache)
        model = _build(config, ctx, seed)
        mask = random_mask(model, rho, make_rng(seed, stream=100 + rho_idx))
        apply_mask_set(model, mask)
        tau_pre = _tau(config, ctx, model)
        model, a_post = _train_eval(config, ctx, model, seed)
        tau_post = _tau(config, ctx, model)
        return RunRecord(
            dataset=ctx.name, seed=seed, rho_nominal=rho, rho_realized=mask.rho_realized,
            tau_pre=tau_pre, tau_post=tau_post, a_clean=a_clean, a_post=a_post,
            winning_ticket=is_winning(a_clean, a_post, config.wt_threshold, config.wt_absolute),
            wall_time=time.monotonic() - start,
        )
    except Exception as exc:  # failed cell: record and continue the sweep
        return RunRecord(
            dataset=ctx.name, seed=seed, rho_nominal=rho, rho_realized=math.nan,
            tau_pre=math.nan, tau_post=math.nan, a_clean=math.nan, a_post=math.nan,
            winning_ticket=False, wall_time=time.monotonic() - start,
            failed=True, error=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(config: ExperimentConfig, progress=None) -> list:
    """All (dataset, rho, seed) cells, deterministically sorted.

    Failed cells are recorded with an error string instead of aborting the
    sweep. ``progress`` receives each finished RunRecord if given.
    """
    contexts = [_prepare(config, name) for name in config.datasets]
    cells = [
        (ctx, rho, rho_idx, seed)
        for ctx in contexts
        for rho_idx, rho in enumerate(config.rho_grid)
        for seed in range(config.seeds)
    ]
    records = []
    # Dense twins are per (dataset, seed); prime them serially so worker
    # threads only read the cache.
    twin_cache = {}
    for ctx in contexts:
        for seed in range(config.seeds):
            _dense_twin(config, ctx, seed, twin_cache)

    def work(cell):
        ctx, rho, rho_idx, seed = cell
        rec = _run_cell(config, ctx, rho, rho_idx, seed, twin_cache)
        if progress is not None:
            progress(rec)
        return rec

    if config.max_workers == 1:
        records = [work(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            records = list(pool.map(work, cells))
    records.sort(key=lambda r: (r.dataset, r.rho_nominal, r.seed))
    return records


# ---------------------------------------------------------------------------
# Aggregate statistics
# ---------------------------------------------------------------------------

def _ok(records):
    return [r for r in records if not r.failed]


def winning_probability(records, theta_grid=DEFAULT_THETA_GRID, eps: float = 0.05,
                        rho_grid=None):
    """P(winning ticket | rho, tau_pre in [theta +- eps]) with run counts.

    With several datasets, per-dataset fractions are averaged with equal
    weight (subset-size normalization) so a larger dataset cannot dominate.
    Returns rows of (rho, theta, probability, count); empty buckets are NaN.
    """
    records = _ok(records)
    if rho_grid is None:
        rho_grid = sorted({r.rho_nominal for r in records})
    rows = []
    for rho in rho_grid:
        for theta in theta_grid:
            bucket = [r for r in records
                      if r.rho_nominal == rho and abs(r.tau_pre - theta) <= eps + 1e-12]
            if not bucket:
                rows.append((rho, theta, math.nan, 0))
                continue
            by_ds = {}
            for r in bucket:
                by_ds.setdefault(r.dataset, []).append(r)
            fracs = [sum(r.winning_ticket for r in rs) / len(rs) for rs in by_ds.values()]
            rows.append((rho, theta, sum(fracs) / len(fracs), len(bucket)))
    return rows


def transition_probability(records, kappa_grid=DEFAULT_KAPPA_GRID):
    """P(tau_post >= kappa | tau_pre < kappa) rows of (kappa, probability, count)."""
    records = _ok(records)
    rows = []
    for kappa in kappa_grid:
        cond = [r for r in records if r.tau_pre < kappa]
        if not cond:
            rows.append((kappa, math.nan, 0))
            continue
        hits = sum(r.tau_post >= kappa for r in cond)
        rows.append((kappa, hits / len(cond), len(cond)))
    return rows


def correlation(records, pooled_rho_range=(0.3, 0.7)):
    """Pearson r between tau_pre and A_post, per rho and pooled over a range.

    Returns {rho_or_'pooled': (r, p, n) or (nan, nan, n) when undefined}.
    """
    records = _ok(records)
    out = {}
    groups = {}
    for r in records:
        groups.setdefault(r.rho_nominal, []).append(r)
    lo, hi = pooled_rho_range
    pooled = [r for r in records if lo - 1e-12 <= r.rho_nominal <= hi + 1e-12]
    for key, rs in list(sorted(groups.items())) + [("pooled", pooled)]:
        xs = [r.tau_pre for r in rs]
        ys = [r.a_post for r in rs]
        try:
            out[key] = pearson(xs, ys)
        except ValueError:
            out[key] = (math.nan, math.nan, len(rs))
    return out


def mean_relative_accuracy(records, theta: float = None, eps: float = 0.05) -> float:
    """Mean of (A_post - A_clean)/A_clean, optionally over a tau_pre bucket."""
    records = [r for r in _ok(records) if r.a_clean > 0.0]
    if theta is not None:
        records = [r for r in records if abs(r.tau_pre - theta) <= eps + 1e-12]
    if not records:
        return math.nan
    return sum((r.a_post - r.a_clean) / r.a_clean for r in records) / len(records)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

RUNS_HEADER = ["dataset", "seed", "rho_nominal", "rho_realized", "tau_pre", "tau_post",
               "a_clean", "a_post", "winning_ticket", "failed", "error"]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".10g")
    return str(x)


def runs_csv_text(records) -> str:
    """Deterministic runs.csv body; wall_time is deliberately excluded so
    identical configs reproduce byte-identical files."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for r in records:
        w.writerow([r.dataset, r.seed, _fmt(float(r.rho_nominal)), _fmt(r.rho_realized),
                    _fmt(r.tau_pre), _fmt(r.tau_post), _fmt(r.a_clean), _fmt(r.a_post),
                    _fmt(r.winning_ticket), _fmt(r.failed), r.error])
    return buf.getvalue()


def records_from_csv(path: str) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RUNS_HEADER:
            raise DataError(f"{path}: unexpected runs.csv header {reader.fieldnames}")
        records = []
        for row in reader:
            records.append(RunRecord(
                dataset=row["dataset"], seed=int(row["seed"]),
                rho_nominal=float(row["rho_nominal"]), rho_realized=float(row["rho_realized"]),
                tau_pre=float(row["tau_pre"]), tau_post=float(row["tau_post"]),
                a_clean=float(row["a_clean"]), a_post=float(row["a_post"]),
                winning_ticket=row["winning_ticket"] == "1",
                failed=row["failed"] == "1", error=row["error"],
            ))
    return records


PLOT_STUB = """\
#!/usr/bin/env python3
# Renders the sweep CSVs in this directory to figures.
# Usage: python3 plot_reports.py [out_dir]
import sys

from sparsegnn.plots import render_all

render_all(sys.argv[1] if len(sys.argv) > 1 else ".")
"""


def emit_reports(records, out_dir: str, config: ExperimentConfig = None) -> dict:
    """Write runs/winning_prob/transition/correlation/scatter_tau CSVs and a
    plotting-script stub. Returns {logical name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    theta_grid = config.theta_grid if config else DEFAULT_THETA_GRID
    eps = config.theta_eps if config else 0.05
    kappa_grid = config.kappa_grid if config else DEFAULT_KAPPA_GRID

    paths = {}

    def write(name, header, rows):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        paths[name] = path
        return path

    path = os.path.join(out_dir, "runs.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write(runs_csv_text(records))
    paths["runs.csv"] = path

    write("winning_prob.csv", ["rho", "theta", "probability", "count"],
          winning_probability(records, theta_grid, eps))
    write("transition.csv", ["kappa", "probability", "count"],
          transition_probability(records, kappa_grid))
    corr = correlation(records)
    write("correlation.csv", ["rho", "r", "p_value", "n"],
          [(k, r, p, n) for k, (r, p, n) in corr.items()])

    scatter = {}
    for r in _ok(records):
        scatter.setdefault((r.dataset, r.rho_nominal), []).append(r)
    scatter_rows = []
    for (ds, rho) in sorted(scatter):
        rs = scatter[(ds, rho)]
        scatter_rows.append((ds, rho,
                             sum(x.tau_pre for x in rs) / len(rs),
                             sum(x.tau_post for x in rs) / len(rs),
                             len(rs)))
    write("scatter_tau.csv", ["dataset", "rho", "mean_tau_pre", "mean_tau_post", "count"],
          scatter_rows)

    stub = os.path.join(out_dir, "plot_reports.py")
    with open(stub, "w", newline="\n") as fh:
        fh.write(PLOT_STUB)
    paths["plot_reports.py"] = stub
    return paths
