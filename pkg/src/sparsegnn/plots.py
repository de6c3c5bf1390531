"""Figure rendering for sweep reports.

Reads the CSVs written by emit_reports and renders PNGs alongside them:
a winning-probability heatmap, per-rho correlation bars, and the
tau_pre/tau_post scatter with the y = x reference line.
"""

from __future__ import annotations

import csv
import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _read_csv(path: str):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def render_winning_prob(csv_path: str, out_path: str) -> str:
    rows = _read_csv(csv_path)
    rhos = sorted({float(r["rho"]) for r in rows})
    thetas = sorted({float(r["theta"]) for r in rows})
    grid = np.full((len(thetas), len(rhos)), np.nan)
    for r in rows:
        i = thetas.index(float(r["theta"]))
        j = rhos.index(float(r["rho"]))
        grid[i, j] = float(r["probability"])
    fig, ax = plt.subplots(figsize=(7, 5))
    im = ax.imshow(grid, origin="lower", aspect="auto", vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(rhos)), [f"{x:g}" for x in rhos])
    ax.set_yticks(range(len(thetas)), [f"{x:g}" for x in thetas])
    ax.set_xlabel("pruning ratio rho")
    ax.set_ylabel("tau_pre bucket center")
    ax.set_title("Winning-ticket probability")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_correlation(csv_path: str, out_path: str) -> str:
    rows = [r for r in _read_csv(csv_path) if r["rho"] != "pooled"]
    rhos = [float(r["rho"]) for r in rows]
    rs = [float(r["r"]) for r in rows]
    ps = [float(r["p_value"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    colors = ["tab:blue" if not math.isnan(p) and p < 0.05 else "tab:gray" for p in ps]
    ax.bar([f"{x:g}" for x in rhos], rs, color=colors)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("pruning ratio rho")
    ax.set_ylabel("Pearson r (tau_pre, A_post)")
    ax.set_title("Correlation by pruning ratio (blue: p < 0.05)")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_scatter_tau(csv_path: str, out_path: str) -> str:
    rows = _read_csv(csv_path)
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    datasets = sorted({r["dataset"] for r in rows})
    for ds in datasets:
        xs = [float(r["mean_tau_pre"]) for r in rows if r["dataset"] == ds]
        ys = [float(r["mean_tau_post"]) for r in rows if r["dataset"] == ds]
        ax.scatter(xs, ys, label=ds, alpha=0.8)
    ax.plot([0, 1], [0, 1], "k--", linewidth=0.8, label="tau_post = tau_pre")
    ax.set_xlabel("mean tau_pre")
    ax.set_ylabel("mean tau_post")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.set_title("Expressivity before vs after training")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_delta_bar(runs_csv: str, out_path: str) -> str:
    """Mean relative accuracy change per rho."""
    rows = _read_csv(runs_csv)
    by_rho = {}
    for r in rows:
        if r["failed"] == "1" or float(r["a_clean"]) <= 0:
            continue
        rho = float(r["rho_nominal"])
        rel = (float(r["a_post"]) - float(r["a_clean"])) / float(r["a_clean"])
        by_rho.setdefault(rho, []).append(rel)
    rhos = sorted(by_rho)
    deltas = [sum(by_rho[r]) / len(by_rho[r]) for r in rhos]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([f"{x:g}" for x in rhos], deltas, color="tab:orange")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("pruning ratio rho")
    ax.set_ylabel("mean (A_post - A_clean) / A_clean")
    ax.set_title("Mean relative test accuracy change")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_all(report_dir: str) -> dict:
    """Render every figure whose source CSV exists in ``report_dir``."""
    jobs = [
        ("winning_prob.csv", "winning_prob.png", render_winning_prob),
        ("correlation.csv", "correlation.png", render_correlation),
        ("scatter_tau.csv", "scatter_tau.png", render_scatter_tau),
        ("runs.csv", "delta_accuracy.png", render_delta_bar),
    ]
    out = {}
    for src, dst, fn in jobs:
        src_path = os.path.join(report_dir, src)
        if os.path.isfile(src_path):
            out[dst] = fn(src_path, os.path.join(report_dir, dst))
    return out
