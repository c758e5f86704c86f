"""Reference decoder-style causal attention with an unbounded, growing cache.

This is the comparison target for the memory/latency benchmarks: its
key/value rows are appended per token, so cache payload grows linearly with
context length and each decode step attends over the whole prefix. Standard
1/sqrt(d_k) score scaling is always used here regardless of the bounded
model's score_scale flag (the comparison is about scaling behavior, not
score parity). Single-head only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as num
from .core import ConfigError, ModelConfig


@dataclass
class BaselineParams:
    """Projections for the growing-cache attention layer (single head).

    w_query / w_key: (d_model, d_k); w_value: (d_model, d_v);
    w_out: (d_v, d_model).
    """

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray
    w_out: np.ndarray


@dataclass
class GrowingCache:
    """Appended per-token keys (T, d_k) and values (T, d_v); T tracks tokens seen."""

    keys: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.keys.shape[0]

    def payload_bytes(self) -> int:
        return self.keys.nbytes + self.values.nbytes


def init_baseline(config: ModelConfig, rng: np.random.Generator) -> BaselineParams:
    """Gaussian std-1/sqrt(fan-in) projections; shares ModelConfig dimensions."""
    if config.n_heads != 1:
        raise ConfigError("baseline supports n_heads == 1 only")
    dm, dk, dv = config.d_model, config.d_k, config.d_v
    return BaselineParams(
        w_query=num.gaussian(rng, dm, dk, 1.0 / np.sqrt(dm)),
        w_key=num.gaussian(rng, dm, dk, 1.0 / np.sqrt(dm)),
        w_value=num.gaussian(rng, dm, dv, 1.0 / np.sqrt(dm)),
        w_out=num.gaussian(rng, dv, dm, 1.0 / np.sqrt(dv)),
    )


def empty_cache(config: ModelConfig, dtype=None) -> GrowingCache:
    dtype = dtype or num.active_dtype()
    return GrowingCache(
        keys=np.zeros((0, config.d_k), dtype=dtype),
        values=np.zeros((0, config.d_v), dtype=dtype),
    )


def baseline_step(
    x: np.ndarray, cache: GrowingCache, params: BaselineParams, config: ModelConfig
) -> tuple[np.ndarray, GrowingCache]:
    """One decode step: append the token's key/value, attend over all rows.

    The new token attends over the whole cache including itself. Returns the
    output (1, d_model) and the grown cache; the input cache is not mutated.
    """
    if x.ndim != 2 or x.shape != (1, config.d_model):
        raise num.DimensionError(f"x must be (1, {config.d_model}), got {getattr(x, 'shape', None)}")
    k = num.matmul(x, params.w_key)
    v = num.matmul(x, params.w_value)
    grown = GrowingCache(keys=np.vstack([cache.keys, k]), values=np.vstack([cache.values, v]))
    q = num.matmul(x, params.w_query)
    scores = num.matmul(q, grown.keys.T) * q.dtype.type(1.0 / np.sqrt(config.d_k))
    weights = num.softmax_row(scores)
    return num.matmul(num.matmul(weights, grown.values), params.w_out), grown


def prefill_cache(xs: np.ndarray, params: BaselineParams, config: ModelConfig) -> GrowingCache:
    """Vectorized cache construction for xs (N, d_model); used by benchmarks
    to reach a context length without stepping token by token."""
    return GrowingCache(
        keys=num.matmul(xs, params.w_key),
        values=num.matmul(xs, params.w_value),
    )


def full_causal_attention(xs: np.ndarray, params: BaselineParams, config: ModelConfig) -> np.ndarray:
    """One-shot causal-masked attention over the whole sequence.

    Independent reference for the incremental path: row t attends over rows
    0..t with the same 1/sqrt(d_k) scaling. Returns (N, d_model).
    """
    n = xs.shape[0]
    q = num.matmul(xs, params.w_query)
    k = num.matmul(xs, params.w_key)
    v = num.matmul(xs, params.w_value)
    scores = num.matmul(q, k.T) * q.dtype.type(1.0 / np.sqrt(config.d_k))
    mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    scores = np.where(mask, -np.inf, scores)
    weights = num.softmax_row(scores)
    return num.matmul(num.matmul(weights, v), params.w_out)
