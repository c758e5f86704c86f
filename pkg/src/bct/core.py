"""Bounded-cache attention layer: fixed-capacity key/value memory with
softmax-weighted outer-product writes, plus a symmetric read path.

The cache holds a fixed number of slots per head. A token is written by
projecting it to a write query and a write value, scoring the query against
the slot keys (dot product + softmax), and adding the resulting
weights-by-value outer product into the slot values. Slot keys stay fixed
during a forward pass; only slot values accumulate. Reads score a read query
against the same slot keys and return a convex combination of slot values,
followed by an output projection.

Values are treated functionally: updates return new state rather than
mutating the old one, so snapshots stay valid and streams/heads can run
concurrently without shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import numerics as num


class ConfigError(ValueError):
    """Invalid model or task configuration."""


_SCORE_SCALES = ("none", "inv_sqrt_dk")
_VALUE_INITS = ("zeros", "gaussian")


@dataclass(frozen=True)
class ModelConfig:
    """Layer dimensions and numeric flags.

    d_model: embedding width of inputs/outputs.
    d_k / d_v: slot key / slot value widths.
    n_slots: fixed cache capacity (slot count per head).
    n_heads: independent cache heads; outputs are concatenated then projected,
        which pins d_model == n_heads * d_v.
    score_scale: "none" (bare dot product, default) or "inv_sqrt_dk".
    value_init: initial slot values, "zeros" (default) or "gaussian".
    """

    d_model: int
    d_k: int
    d_v: int
    n_slots: int
    n_heads: int = 1
    score_scale: str = "none"
    value_init: str = "zeros"
    seed: int = 0

    def __post_init__(self):
        for name in ("d_model", "d_k", "d_v", "n_slots", "n_heads"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.score_scale not in _SCORE_SCALES:
            raise ConfigError(f"score_scale must be one of {_SCORE_SCALES}, got {self.score_scale!r}")
        if self.value_init not in _VALUE_INITS:
            raise ConfigError(f"value_init must be one of {_VALUE_INITS}, got {self.value_init!r}")
        if self.d_model != self.n_heads * self.d_v:
            raise ConfigError(
                f"d_model must equal n_heads * d_v for the output wiring: "
                f"{self.d_model} != {self.n_heads} * {self.d_v}"
            )

    def score_multiplier(self) -> float:
        return 1.0 if self.score_scale == "none" else 1.0 / np.sqrt(self.d_k)


def _score_multiplier(score_scale: str, d_k: int) -> float:
    if score_scale not in _SCORE_SCALES:
        raise ConfigError(f"score_scale must be one of {_SCORE_SCALES}, got {score_scale!r}")
    return 1.0 if score_scale == "none" else 1.0 / np.sqrt(d_k)


@dataclass
class LayerParams:
    """Learnable tensors. Leading axis is the head; shapes below are per-head.

    w_write_query: (H, d_model, d_k)   write-query projection
    w_write_value: (H, d_model, d_v)   write-value projection
    w_read_query:  (H, d_model, d_k)   read-query projection
    w_out:         (H * d_v, d_model)  output projection over concatenated reads
    slot_keys:     (H, n_slots, d_k)   cache keys, learnable, fixed per pass
    """

    w_write_query: np.ndarray
    w_write_value: np.ndarray
    w_read_query: np.ndarray
    w_out: np.ndarray
    slot_keys: np.ndarray


@dataclass
class CacheState:
    """The bounded memory: per-head slot keys and slot values.

    keys:   (H, n_slots, d_k), fixed during a forward pass
    values: (H, n_slots, d_v), updated once per token
    tokens_seen: bookkeeping only; never gates behavior (writes are additive,
        nothing is evicted). The payload footprint is independent of it.
    """

    keys: np.ndarray
    values: np.ndarray
    tokens_seen: int = 0

    def payload_bytes(self) -> int:
        return self.keys.nbytes + self.values.nbytes


def _stack_gaussian(rng, n, rows, cols, std):
    return np.stack([num.gaussian(rng, rows, cols, std) for _ in range(n)])


def init_layer(config: ModelConfig, rng: np.random.Generator) -> tuple[LayerParams, CacheState]:
    """Draw parameters and build the matching initial cache.

    Projections are Gaussian with std 1/sqrt(fan-in); slot keys use their own
    width as fan-in. Draw order follows the LayerParams field order, so the
    same seed reproduces bit-identical parameters.
    """
    h, dm, dk, dv, m = config.n_heads, config.d_model, config.d_k, config.d_v, config.n_slots
    params = LayerParams(
        w_write_query=_stack_gaussian(rng, h, dm, dk, 1.0 / np.sqrt(dm)),
        w_write_value=_stack_gaussian(rng, h, dm, dv, 1.0 / np.sqrt(dm)),
        w_read_query=_stack_gaussian(rng, h, dm, dk, 1.0 / np.sqrt(dm)),
        w_out=num.gaussian(rng, h * dv, dm, 1.0 / np.sqrt(h * dv)),
        slot_keys=_stack_gaussian(rng, h, m, dk, 1.0 / np.sqrt(dk)),
    )
    return params, initial_state(params, config)


def initial_state(params: LayerParams, config: ModelConfig) -> CacheState:
    """Fresh cache: keys copied from the learnable slot keys, values per
    config.value_init (gaussian draws come from make_rng(config.seed))."""
    h, m, dv = config.n_heads, config.n_slots, config.d_v
    if config.value_init == "zeros":
        values = np.zeros((h, m, dv), dtype=num.active_dtype())
    else:
        values = _stack_gaussian(num.make_rng(config.seed), h, m, dv, 1.0)
    return CacheState(keys=params.slot_keys.copy(), values=values, tokens_seen=0)


def project_write(x: np.ndarray, params: LayerParams, head: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Map one input row to its write query (1, d_k) and write value (1, d_v)."""
    wq = num.matmul(x, params.w_write_query[head])
    wv = num.matmul(x, params.w_write_value[head])
    return wq, wv


def write_weights(write_query: np.ndarray, slot_keys: np.ndarray, score_scale: str = "none") -> np.ndarray:
    """Slot write weights: softmax of scaled query-key scores, shape (1, n_slots).

    Output is a probability vector (entries positive, sum 1 up to rounding).
    """
    scores = num.matmul(write_query, slot_keys.T)
    s = _score_multiplier(score_scale, slot_keys.shape[1])
    if s != 1.0:
        scores = scores * scores.dtype.type(s)
    return num.softmax_row(scores)


def update_cache(values_prev: np.ndarray, weights: np.ndarray, write_value: np.ndarray) -> np.ndarray:
    """One additive write: values_prev + outer(weights, write_value).

    values_prev is not mutated; a new (n_slots, d_v) matrix is returned.
    """
    if (
        values_prev.ndim != 2
        or values_prev.shape[0] != weights.shape[1]
        or values_prev.shape[1] != write_value.shape[1]
    ):
        raise num.DimensionError(
            f"update_cache shape mismatch: values {getattr(values_prev, 'shape', None)}, "
            f"weights {weights.shape}, write value {write_value.shape}"
        )
    return values_prev + num.outer(weights, write_value)


def update_sequence(
    xs: np.ndarray,
    values0: np.ndarray,
    params: LayerParams,
    config: ModelConfig,
    head: int = 0,
) -> np.ndarray:
    """Sequential write path: fold every token of xs (N, d_model) into the cache.

    Reference implementation of the per-token loop; the write is applied at
    every step, including the first. Per-token weights and values are
    computed at the input width, while the running sum is held in 64-bit and
    rounded once at the end, so the result agrees with the accumulation form
    (update_parallel) up to per-term rounding rather than summation order.
    """
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise num.DimensionError(f"xs must be (N, d_model) with N >= 1, got {xs.shape}")
    values = values0.astype(np.float64)
    for t in range(xs.shape[0]):
        try:
            wq, wv = project_write(xs[t : t + 1], params, head)
            ww = write_weights(wq, params.slot_keys[head], config.score_scale)
            values = update_cache(values, ww, wv)
        except (num.DimensionError, num.NumericError) as e:
            raise type(e)(f"token {t}: {e}") from e
    return values.astype(values0.dtype, copy=False)


def update_parallel(
    xs: np.ndarray,
    values0: np.ndarray,
    params: LayerParams,
    config: ModelConfig,
    head: int = 0,
) -> np.ndarray:
    """Accumulation form of the write path: values0 + sum_t outer(ww_t, wv_t).

    Slot keys are fixed during a pass, so every token's term is independent
    and the sum can be evaluated in any order/partition; here all terms are
    formed batched and reduced in one fixed-order matrix product, which makes
    the result deterministic for a given build. Weights and values are
    computed at the input width; the reduction runs in 64-bit and is rounded
    once, matching update_sequence's accumulation policy.
    """
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise num.DimensionError(f"xs must be (N, d_model) with N >= 1, got {xs.shape}")
    try:
        wq = num.matmul(xs, params.w_write_query[head])
        wv = num.matmul(xs, params.w_write_value[head])
        scores = num.matmul(wq, params.slot_keys[head].T)
        s = config.score_multiplier()
        if s != 1.0:
            scores = scores * scores.dtype.type(s)
        ww = num.softmax_row(scores)
        total = num.matmul(ww.T.astype(np.float64), wv.astype(np.float64))
        return (values0 + total).astype(values0.dtype, copy=False)
    except (num.DimensionError, num.NumericError) as e:
        raise type(e)(f"batched write path: {e}") from e


def read_cache(x: np.ndarray, state: CacheState, params: LayerParams, config: ModelConfig) -> np.ndarray:
    """Read one token's output (1, d_model) from the cache.

    Per head: softmax-weighted convex combination of slot values, addressed by
    the read query against the slot keys; head reads are concatenated and
    projected by w_out.
    """
    reads = []
    for h in range(config.n_heads):
        rq = num.matmul(x, params.w_read_query[h])
        rw = write_weights(rq, state.keys[h], config.score_scale)
        reads.append(num.matmul(rw, state.values[h]))
    return num.matmul(np.concatenate(reads, axis=1), params.w_out)


def decode_step(
    x: np.ndarray, state: CacheState, params: LayerParams, config: ModelConfig
) -> tuple[np.ndarray, CacheState]:
    """Process one token: write it into the cache, then read with it.

    Returns the token output (1, d_model) and the post-write state. Write
    happens first so a token can retrieve its own contribution.
    """
    new_values = np.empty_like(state.values)
    for h in range(config.n_heads):
        wq, wv = project_write(x, params, h)
        ww = write_weights(wq, state.keys[h], config.score_scale)
        new_values[h] = update_cache(state.values[h], ww, wv)
    new_state = replace(state, values=new_values, tokens_seen=state.tokens_seen + 1)
    return read_cache(x, new_state, params, config), new_state


def layer_forward(
    xs: np.ndarray,
    params: LayerParams,
    config: ModelConfig,
    state: CacheState | None = None,
) -> tuple[np.ndarray, CacheState]:
    """Full pass over xs (N, d_model): write-then-read per token.

    Row t of the output depends only on rows 0..t of xs (causality). Starts
    from initial_state(params, config) unless an explicit state is given.
    """
    if xs.ndim != 2 or xs.shape[0] < 1:
        raise num.DimensionError(f"xs must be (N, d_model) with N >= 1, got {xs.shape}")
    if state is None:
        state = initial_state(params, config)
    ys = np.zeros((xs.shape[0], config.d_model), dtype=xs.dtype)
    for t in range(xs.shape[0]):
        try:
            y, state = decode_step(xs[t : t + 1], state, params, config)
        except (num.DimensionError, num.NumericError) as e:
            raise type(e)(f"token {t}: {e}") from e
        ys[t] = y[0]
    return ys, state
