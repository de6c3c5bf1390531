"""Command-line entry point.

Subcommands: sweep, bounds, tau, sifdg, sparsify, report. Exit codes:
0 success, 1 config error, 2 data error, 3 sweep finished with failed cells.
"""

from __future__ import annotations

import argparse
import sys

from . import expressivity, gnn, harness, pruning, synth
from .graphs import DataError, sifdg_pairs
from .harness import ConfigError
from .tensor import make_rng
from .wl import isomorphism_type_representatives

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsegnn",
                                description="Expressivity-aware pruning experiments for GNNs")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sweep", help="run the pruning-ratio sweep from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default="reports")

    bp = sub.add_parser("bounds", help="print the injectivity probability bounds")
    bp.add_argument("--N", type=int, required=True, help="number of distinct layer inputs")
    bp.add_argument("--rho", type=float, required=True)
    bp.add_argument("--k", type=int, required=True, help="min nonzero components of input differences")
    bp.add_argument("--m", type=int, required=True, help="layer width")
    bp.add_argument("--gamma", type=float, default=0.99, help="target for the width requirement")
    bp.add_argument("--depth", type=int, default=2)
    bp.add_argument("--mp-layers", type=int, default=2)
    bp.add_argument("--dataset-size", type=int, default=1)

    tp = sub.add_parser("tau", help="measure expressivity of a checkpointed model")
    tp.add_argument("--checkpoint", required=True)
    tp.add_argument("--dataset", required=True)
    tp.add_argument("--absolute", action="store_true", help="absolute tolerance mode")

    fp = sub.add_parser("sifdg", help="list structurally isomorphic feature-distinct pairs")
    fp.add_argument("--dataset", required=True)
    fp.add_argument("--node-cap", type=int, default=16)

    zp = sub.add_parser("sparsify", help="injectivity-preserving sparsification of a fresh model")
    zp.add_argument("--dataset", required=True)
    zp.add_argument("--rho-step", type=float, default=0.1)
    zp.add_argument("--k-trials", type=int, default=10)
    zp.add_argument("--seed", type=int, default=0)
    zp.add_argument("--out", help="write the resulting mask set to this path")

    rp = sub.add_parser("report", help="recompute aggregates from runs.csv and render figures")
    rp.add_argument("--runs", required=True)
    rp.add_argument("--out", required=True)
    return p


def _cmd_sweep(args) -> int:
    config = harness.load_config(args.config)

    def progress(rec):
        status = "FAIL" if rec.failed else "ok"
        print(f"[{status}] {rec.dataset} rho={rec.rho_nominal:g} seed={rec.seed} "
              f"tau_pre={rec.tau_pre:.3f} tau_post={rec.tau_post:.3f} "
              f"a_clean={rec.a_clean:.3f} a_post={rec.a_post:.3f}", flush=True)

    records = harness.run_sweep(config, progress=progress)
    paths = harness.emit_reports(records, args.out, config)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    failed = sum(r.failed for r in records)
    if failed:
        print(f"{failed}/{len(records)} cells failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _cmd_bounds(args) -> int:
    rep = expressivity.bound_report(args.N, args.rho, args.k, args.m, depth=args.depth,
                                    mp_layers=args.mp_layers, dataset_size=args.dataset_size,
                                    gamma_target=args.gamma)
    print(f"gamma_layer raw={rep.gamma.raw:.10g} clamped={rep.gamma.clamped:.10g}")
    print(f"gamma_mlp   raw={rep.gamma_mlp.raw:.10g} clamped={rep.gamma_mlp.clamped:.10g}")
    print(f"gamma_gnn   raw={rep.gamma_gnn.raw:.10g} clamped={rep.gamma_gnn.clamped:.10g}")
    print(f"required width for gamma >= {args.gamma:g}: m_min = {rep.m_min}")
    return EXIT_OK


def _cmd_tau(args) -> int:
    model = gnn.load_checkpoint(args.checkpoint)
    dataset = harness.resolve_dataset(args.dataset)
    types = isomorphism_type_representatives(dataset)
    report = expressivity.measure_tau(model, dataset, types.representatives,
                                      relative=not args.absolute)
    print(f"representatives: {types.count}")
    print(f"tau: {report.tau:.6f}{' (degenerate)' if report.degenerate else ''}")
    for i, j in report.indistinguishable_pairs:
        print(f"indistinguishable: graphs {i} and {j}")
    return EXIT_OK


def _cmd_sifdg(args) -> int:
    dataset = harness.resolve_dataset(args.dataset)
    pairs = sifdg_pairs(dataset, node_cap=args.node_cap)
    print(f"{len(pairs)} SIFDG pair(s)")
    for p in pairs:
        print(f"graphs {p.a} and {p.b}: permutation {list(p.permutation)}")
    return EXIT_OK


def _cmd_sparsify(args) -> int:
    dataset = harness.resolve_dataset(args.dataset)
    dataset.validate_nontrivial()
    model = gnn.build_model(dataset.feature_dim, dataset.num_classes, make_rng(args.seed))
    mask_set, achieved = pruning.injectivity_preserving_sparsify(
        model, dataset, rho_step=args.rho_step, k_trials=args.k_trials,
        rng=make_rng(args.seed, stream=1))
    print(f"rho_realized: {mask_set.rho_realized:.4f}")
    for i, rho in enumerate(achieved):
        print(f"layer {i}: rho={rho:.4f}")
    violations = expressivity.criterion1_check(model, dataset)
    print(f"criterion-1 violations: {len(violations)}")
    if args.out:
        pruning.save_mask_set(mask_set, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from . import plots

    records = harness.records_from_csv(args.runs)
    paths = harness.emit_reports(records, args.out)
    figures = plots.render_all(args.out)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    for name in sorted(figures):
        print(f"wrote {figures[name]}")
    return EXIT_OK


_COMMANDS = {
    "sweep": _cmd_sweep,
    "bounds": _cmd_bounds,
    "tau": _cmd_tau,
    "sifdg": _cmd_sifdg,
    "sparsify": _cmd_sparsify,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
