"""Dense linear-algebra helpers and deterministic RNG streams.

All numeric code in this package works on plain 2-D float64 numpy arrays.
The functions here add strict shape checking and keep every accumulation in
64-bit; the FLOAT32 machine epsilon is only applied at the
expressivity-comparison layer, never inside the numerics.
"""

from __future__ import annotations

import numpy as np

# FLOAT32 machine epsilon used as the distinguishability threshold.
FLOAT32_EPS = 1.19e-7


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def hadamard(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def frobenius_inner(a, b) -> float:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"inner product shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(a * b))


def frobenius_norm(a) -> float:
    a = as_matrix(a)
    return float(np.sqrt(np.sum(a * a)))


def uniform_init(rows: int, cols: int, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a (rows x cols) matrix i.i.d. from U(-sqrt(1/fan_in), sqrt(1/fan_in))."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=(rows, cols))


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator; (seed, stream) fully determines the output.

    Streams are statistically independent, so parallel workers can each own
    one without coordination.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def vectors_indistinguishable(a, b, tol: float = FLOAT32_EPS, relative: bool = True) -> bool:
    """True when two vectors are equal at the FLOAT32 threshold.

    Relative mode scales the threshold by max(1, ||a||_inf), which makes the
    test scale-aware; absolute mode is the literal difference-is-zero form.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        return False
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    if relative:
        scale = max(1.0, float(np.max(np.abs(a))) if a.size else 0.0)
        return diff <= tol * scale
    return diff <= tol
