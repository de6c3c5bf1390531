"""Expressivity-aware analysis of pruned graph neural networks.

Modules: graphs (data model + TUDataset IO + isomorphism search), wl (1-WL
color refinement), tensor (dense linear algebra + RNG), gnn (moment-based
message passing with manual backprop), pruning (masks, paths, sparsifier),
expressivity (tau, gradient diversity, probability bounds), stats (Pearson r
with in-repo t-test), synth (builtin datasets), harness (sweeps + CSV
reports), plots (figure rendering), cli (entry point).
"""

from .graphs import DataError, Dataset, Graph, ParseError, parse_tudataset, split, write_tudataset
from .tensor import FLOAT32_EPS, make_rng

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "FLOAT32_EPS",
    "Graph",
    "ParseError",
    "make_rng",
    "parse_tudataset",
    "split",
    "write_tudataset",
    "__version__",
]
