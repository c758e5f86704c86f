"""Runnable invariant suite backing the `verify` subcommand.

Each check builds random instances from the given seed and tests a property
that must hold for any seed: softmax rows normalize, the sequential and
accumulation write paths agree, the final cache is order-invariant in the
input tokens, layer outputs are causal, analytic gradients match finite
differences, and the baseline's incremental decoding matches one-shot
causal attention. Failures are reported, not raised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as num
from .baseline import baseline_step, empty_cache, full_causal_attention, init_baseline
from .core import ModelConfig, init_layer, layer_forward, update_parallel, update_sequence
from .training import grad_check


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def norm_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| scaled by the larger max-magnitude operand."""
    denom = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-30)
    return float(np.abs(a - b).max()) / denom


def _random_instance(rng, n, m, d_model, d_k, seed):
    config = ModelConfig(d_model=d_model, d_k=d_k, d_v=d_model, n_slots=m, seed=seed)
    params, _ = init_layer(config, num.make_rng(seed))
    xs = rng.standard_normal((n, d_model)).astype(num.active_dtype())
    return config, params, xs


def check_softmax_normalization(seed: int) -> CheckResult:
    rng = num.make_rng(seed)
    worst = 0.0
    for m in (1, 2, 7, 64, 300):
        out = num.softmax_row((rng.standard_normal((1, m)) * 10).astype(num.active_dtype()))
        if out.min() <= 0:
            return CheckResult("softmax_normalization", False, f"nonpositive weight at m={m}")
        worst = max(worst, abs(float(out.sum()) - 1.0))
    passed = worst <= 1e-6
    return CheckResult("softmax_normalization", passed, f"max |sum-1| = {worst:.2e}")


def check_sequential_parallel(seed: int) -> CheckResult:
    worst = {32: 0.0, 64: 0.0}
    tol = {32: 1e-6, 64: 1e-10}
    for width in (64, 32):
        with num.precision(width):
            rng = num.make_rng(seed + width)
            for i in range(10):
                n = int(rng.integers(1, 129))
                m = int(rng.integers(1, 65))
                d = int(rng.integers(1, 33))
                config, params, xs = _random_instance(rng, n, m, d, d, seed + i)
                v0 = np.zeros((m, d), dtype=num.active_dtype())
                a = update_sequence(xs, v0, params, config)
                b = update_parallel(xs, v0, params, config)
                worst[width] = max(worst[width], norm_relative_error(a, b))
    passed = all(worst[w] < tol[w] for w in worst)
    return CheckResult(
        "sequential_parallel_identity", passed,
        f"worst rel err 64-bit {worst[64]:.2e} (tol 1e-10), 32-bit {worst[32]:.2e} (tol 1e-6)")


def check_order_invariance(seed: int) -> CheckResult:
    rng = num.make_rng(seed)
    worst = 0.0
    for i in range(5):
        n, m, d = 24, 8, 12
        config, params, xs = _random_instance(rng, n, m, d, d, seed + 7 * i)
        v0 = np.zeros((m, d), dtype=num.active_dtype())
        base = update_sequence(xs, v0, params, config)
        shuffled = update_sequence(xs[rng.permutation(n)], v0, params, config)
        worst = max(worst, norm_relative_error(base, shuffled))
    passed = worst < 1e-10
    return CheckResult("write_order_invariance", passed, f"worst rel err {worst:.2e}")


def check_causality(seed: int) -> CheckResult:
    rng = num.make_rng(seed)
    config, params, xs = _random_instance(rng, 12, 6, 10, 5, seed)
    full, _ = layer_forward(xs, params, config)
    worst = 0.0
    for t in range(1, xs.shape[0] + 1):
        prefix, _ = layer_forward(xs[:t], params, config)
        worst = max(worst, float(np.abs(prefix[t - 1] - full[t - 1]).max()))
    passed = worst < 1e-10
    return CheckResult("layer_causality", passed, f"worst prefix deviation {worst:.2e}")


def check_gradients(seed: int) -> CheckResult:
    config = ModelConfig(d_model=16, d_k=8, d_v=16, n_slots=8, seed=seed)
    report = grad_check(config, num.make_rng(seed), epsilon=1e-5, seq_len=6)
    passed = report.worst < 1e-4
    return CheckResult("gradient_check", passed, f"worst rel err {report.worst:.2e} (tol 1e-4)")


def check_baseline_equivalence(seed: int) -> CheckResult:
    rng = num.make_rng(seed)
    config = ModelConfig(d_model=10, d_k=7, d_v=10, n_slots=4, seed=seed)
    params = init_baseline(config, num.make_rng(seed + 1))
    xs = rng.standard_normal((9, config.d_model)).astype(num.active_dtype())
    oneshot = full_causal_attention(xs, params, config)
    cache = empty_cache(config)
    worst = 0.0
    for t in range(xs.shape[0]):
        y, cache = baseline_step(xs[t : t + 1], cache, params, config)
        worst = max(worst, float(np.abs(y[0] - oneshot[t]).max()))
    passed = worst < 1e-10
    return CheckResult("baseline_incremental_vs_oneshot", passed, f"worst deviation {worst:.2e}")


ALL_CHECKS = (
    check_softmax_normalization,
    check_sequential_parallel,
    check_order_invariance,
    check_causality,
    check_gradients,
    check_baseline_equivalence,
)


def run_invariant_suite(seed: int = 0) -> list[CheckResult]:
    """Run every check at 64-bit precision; exceptions become failures."""
    results = []
    with num.precision(64):
        for check in ALL_CHECKS:
            try:
                results.append(check(seed))
            except Exception as e:  # a crashing invariant is a failing invariant
                results.append(CheckResult(check.__name__.removeprefix("check_"), False,
                                           f"{type(e).__name__}: {e}"))
    return results
