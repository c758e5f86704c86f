"""Dense linear-algebra substrate: matrices, products, row softmax, seeded RNG.

A "matrix" throughout this package is a 2-D C-contiguous numpy array
(rows = shape[0], cols = shape[1], data = the row-major buffer). The element
width is a process-wide runtime setting: 64-bit for verification and gradient
work, 32-bit for realistic inference benchmarks. Operations preserve the dtype
of their inputs; constructors honor the active width.

All operations here are pure functions of their inputs and never mutate
arguments.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not satisfy an operation's preconditions."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required (e.g. NaN scores)."""


_ELEMENT_WIDTH = 64
_DTYPES = {32: np.float32, 64: np.float64}


def set_element_width(bits: int) -> None:
    """Select the scalar width (32 or 64) used by constructors from now on."""
    global _ELEMENT_WIDTH
    if bits not in _DTYPES:
        raise ValueError(f"element width must be 32 or 64, got {bits}")
    _ELEMENT_WIDTH = bits


def element_width() -> int:
    return _ELEMENT_WIDTH


def active_dtype() -> type:
    return _DTYPES[_ELEMENT_WIDTH]


@contextmanager
def precision(bits: int):
    """Temporarily switch the active element width (test/bench helper)."""
    prev = _ELEMENT_WIDTH
    set_element_width(bits)
    try:
        yield
    finally:
        set_element_width(prev)


def matrix(data, dtype=None) -> np.ndarray:
    """Build a 2-D C-order matrix in the active (or given) dtype."""
    out = np.array(data, dtype=dtype or active_dtype(), order="C")
    if out.ndim != 2:
        raise DimensionError(f"matrix must be 2-D, got shape {out.shape}")
    return out


def zeros(rows: int, cols: int, dtype=None) -> np.ndarray:
    return np.zeros((rows, cols), dtype=dtype or active_dtype())


def _check_2d(name: str, a: np.ndarray) -> None:
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        shape = getattr(a, "shape", None)
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product; shapes (r, k) x (k, c) -> (r, c)."""
    _check_2d("a", a)
    _check_2d("b", b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Outer product of two row vectors: (1, m) x (1, n) -> (m, n).

    Computed as matmul(u.T, v), so the identity outer(u, v) == matmul(u.T, v)
    holds exactly (each entry is a single IEEE multiply).
    """
    _check_2d("u", u)
    _check_2d("v", v)
    if u.shape[0] != 1 or v.shape[0] != 1:
        raise DimensionError(f"outer expects row vectors, got {u.shape} and {v.shape}")
    return u.T @ v


def softmax_row(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety.

    Accepts a (1, m) row or any 2-D matrix (each row normalized
    independently). Outputs are in (0, 1] and each row sums to 1.
    """
    _check_2d("scores", scores)
    if np.isnan(scores).any():
        raise NumericError("softmax_row: NaN in scores")
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded deterministic generator (PCG64).

    The same seed yields the identical stream across runs and platforms;
    draws happen in float64 and are cast to the active width, so 32-bit
    values are the rounded 64-bit ones.
    """
    return np.random.Generator(np.random.PCG64(seed))


def gaussian(rng: np.random.Generator, rows: int, cols: int, std: float) -> np.ndarray:
    """Mean-0 Gaussian matrix with the given std, in the active dtype."""
    return (rng.standard_normal((rows, cols)) * std).astype(active_dtype())
