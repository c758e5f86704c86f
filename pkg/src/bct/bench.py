"""Memory and per-token latency measurements: bounded cache vs growing cache.

Cache memory is computed analytically from state shapes and cross-checked
against the actual allocated payload (array buffer sizes), not process RSS:
the claim under test is about cache state, and RSS is allocator-noisy.
Latency times a single steady-state decode step at a given context length,
reporting median and p90 over repetitions after discarded warmup runs, with
fixed-seed inputs. Latency runs are single-threaded and pinned to one CPU
where the platform allows; benchmarking concurrently within one process is
not supported.
"""

from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as num
from .baseline import baseline_step, empty_cache, init_baseline, prefill_cache
from .core import CacheState, ModelConfig, decode_step, init_layer, initial_state, update_parallel

MODEL_IDS = ("bct", "baseline")

CSV_COLUMNS = ("model", "context_length", "cache_bytes",
               "latency_median_s", "latency_p90_s", "reps")


@dataclass
class BenchSample:
    """One measured context length; latency fields are None in memory-only runs."""

    context_length: int
    cache_bytes: int
    payload_bytes: int
    latency_median_s: float | None = None
    latency_p90_s: float | None = None
    unreliable_timer: bool = False


@dataclass
class BenchReport:
    model_id: str
    config: ModelConfig
    element_width: int
    samples: list[BenchSample] = field(default_factory=list)
    repetitions: int = 0
    timer_resolution_s: float = 0.0

    def validate(self) -> None:
        if self.model_id not in MODEL_IDS:
            raise ValueError(f"model_id must be one of {MODEL_IDS}, got {self.model_id!r}")
        lengths = [s.context_length for s in self.samples]
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise ValueError(f"context lengths must be strictly increasing, got {lengths}")
        timed = [s for s in self.samples if s.latency_median_s is not None]
        if timed:
            if self.repetitions < 5:
                raise ValueError(f"latency reports need >= 5 repetitions, got {self.repetitions}")
            if any(s.latency_median_s <= 0 or (s.latency_p90_s or 0) <= 0 for s in timed):
                raise ValueError("latencies must be positive")


def analytic_cache_bytes(model_id: str, config: ModelConfig, context_length: int,
                         width_bits: int | None = None) -> int:
    """Cache payload in bytes from shapes alone.

    Bounded model: n_heads * n_slots * (d_k + d_v) * width, independent of
    context length. Baseline: context_length * (d_k + d_v) * width.
    """
    width = (width_bits or num.element_width()) // 8
    per_row = (config.d_k + config.d_v) * width
    if model_id == "bct":
        return config.n_heads * config.n_slots * per_row
    if model_id == "baseline":
        return context_length * per_row
    raise ValueError(f"model_id must be one of {MODEL_IDS}, got {model_id!r}")


def _bct_state_after(n_tokens: int, params, config: ModelConfig) -> CacheState:
    """Cache state after writing n_tokens fixed-seed tokens (accumulation form)."""
    state = initial_state(params, config)
    if n_tokens == 0:
        return state
    xs = num.make_rng(config.seed + 1).standard_normal(
        (n_tokens, config.d_model)).astype(num.active_dtype())
    values = np.stack([
        update_parallel(xs, state.values[h], params, config, head=h)
        for h in range(config.n_heads)
    ])
    return CacheState(keys=state.keys, values=values, tokens_seen=n_tokens)


def measure_memory(model_id: str, config: ModelConfig, lengths: list[int]) -> BenchReport:
    """Analytic cache bytes cross-checked against allocated payload at each length."""
    if not lengths:
        raise ValueError("lengths must be nonempty")
    rng = num.make_rng(config.seed)
    samples = []
    if model_id == "bct":
        params, _ = init_layer(config, rng)
        for n in sorted(lengths):
            state = _bct_state_after(n, params, config)
            samples.append(BenchSample(
                context_length=n,
                cache_bytes=analytic_cache_bytes(model_id, config, n),
                payload_bytes=state.payload_bytes(),
            ))
    else:
        params = init_baseline(config, rng)
        for n in sorted(lengths):
            xs = num.make_rng(config.seed + 1).standard_normal(
                (n, config.d_model)).astype(num.active_dtype())
            cache = prefill_cache(xs, params, config)
            samples.append(BenchSample(
                context_length=n,
                cache_bytes=analytic_cache_bytes(model_id, config, n),
                payload_bytes=cache.payload_bytes(),
            ))
    report = BenchReport(
        model_id=model_id,
        config=config,
        element_width=num.element_width(),
        samples=samples,
        repetitions=0,
        timer_resolution_s=time.get_clock_info("perf_counter").resolution,
    )
    report.validate()
    return report


@contextmanager
def _pinned_single_cpu():
    try:
        prev = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(prev)})
    except (AttributeError, OSError):
        prev = None
    try:
        yield
    finally:
        if prev is not None:
            try:
                os.sched_setaffinity(0, prev)
            except OSError:
                pass


def _decode_step_closure(model_id: str, n: int, config: ModelConfig, rng):
    """Prepare the state for tokens 1..N-1 and return a thunk timing token N."""
    x = num.make_rng(config.seed + 2).standard_normal(
        (1, config.d_model)).astype(num.active_dtype())
    if model_id == "bct":
        params, _ = init_layer(config, rng)
        state = _bct_state_after(n - 1, params, config)
        return lambda: decode_step(x, state, params, config)
    params = init_baseline(config, rng)
    if n > 1:
        xs = num.make_rng(config.seed + 1).standard_normal(
            (n - 1, config.d_model)).astype(num.active_dtype())
        cache = prefill_cache(xs, params, config)
    else:
        cache = empty_cache(config)
    return lambda: baseline_step(x, cache, params, config)


def measure_latency(model_id: str, config: ModelConfig, lengths: list[int],
                    reps: int = 9, warmup: int = 3, block: int = 5) -> BenchReport:
    """Time the decode step for the token at each context length.

    The state for the first N-1 tokens is prepared outside the timed region;
    each repetition times one functional decode step from that state. The
    lengths are timed in alternating blocks of `block` steps: alternation
    spreads slow drifts in machine load over every length alike (so their
    ratios are not biased by when each length happened to run), while the
    within-block runs keep each length's working set warm. Median and p90
    are taken over exactly `reps` samples per length. Same seed gives
    bit-identical step outputs across runs (timings vary).
    """
    if reps < 5:
        raise ValueError(f"reps must be >= 5, got {reps}")
    if warmup < 1:
        raise ValueError(f"warmup must be >= 1, got {warmup}")
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    if not lengths:
        raise ValueError("lengths must be nonempty")
    resolution = time.get_clock_info("perf_counter").resolution
    rng = num.make_rng(config.seed)
    ordered = sorted(lengths)
    samples = []
    with _pinned_single_cpu():
        steps = {n: _decode_step_closure(model_id, n, config, rng) for n in ordered}
        payloads = {}
        for n in ordered:
            for _ in range(warmup):
                _, stepped = steps[n]()
            payloads[n] = stepped.payload_bytes()  # state after the N-th token
        rounds = -(-reps // block)
        times = {n: np.empty(rounds * block) for n in ordered}
        for r in range(rounds):
            for n in ordered:
                for b in range(block):
                    t0 = time.perf_counter()
                    steps[n]()
                    times[n][r * block + b] = time.perf_counter() - t0
        for n in ordered:
            kept = times[n][:reps]
            median = float(np.median(kept))
            samples.append(BenchSample(
                context_length=n,
                cache_bytes=analytic_cache_bytes(model_id, config, n),
                payload_bytes=payloads[n],
                latency_median_s=median,
                latency_p90_s=float(np.percentile(kept, 90)),
                unreliable_timer=resolution > 0.01 * median,
            ))
    report = BenchReport(
        model_id=model_id,
        config=config,
        element_width=num.element_width(),
        samples=samples,
        repetitions=reps,
        timer_resolution_s=resolution,
    )
    report.validate()
    return report


def merge_reports(memory: BenchReport, latency: BenchReport) -> BenchReport:
    """Combine a memory-only and a latency report over the same lengths."""
    if memory.model_id != latency.model_id or memory.config != latency.config:
        raise ValueError("reports to merge must share model_id and config")
    by_length = {s.context_length: s for s in memory.samples}
    merged = []
    for s in latency.samples:
        mem = by_length.get(s.context_length, s)
        merged.append(BenchSample(
            context_length=s.context_length,
            cache_bytes=mem.cache_bytes,
            payload_bytes=mem.payload_bytes,
            latency_median_s=s.latency_median_s,
            latency_p90_s=s.latency_p90_s,
            unreliable_timer=s.unreliable_timer,
        ))
    out = BenchReport(
        model_id=latency.model_id,
        config=latency.config,
        element_width=latency.element_width,
        samples=merged,
        repetitions=latency.repetitions,
        timer_resolution_s=latency.timer_resolution_s,
    )
    out.validate()
    return out


def emit_report(report: BenchReport, fmt: str = "json") -> str:
    """Render with stable field ordering; the JSON form round-trips losslessly."""
    report.validate()
    if fmt == "csv":
        lines = [",".join(CSV_COLUMNS)]
        for s in report.samples:
            med = "" if s.latency_median_s is None else repr(s.latency_median_s)
            p90 = "" if s.latency_p90_s is None else repr(s.latency_p90_s)
            lines.append(f"{report.model_id},{s.context_length},{s.cache_bytes},"
                         f"{med},{p90},{report.repetitions}")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        doc = {
            "model": report.model_id,
            "element_width": report.element_width,
            "repetitions": report.repetitions,
            "timer_resolution_s": report.timer_resolution_s,
            "config": asdict(report.config),
            "samples": [asdict(s) for s in report.samples],
        }
        return json.dumps(doc, indent=2) + "\n"
    raise ValueError(f"format must be csv or json, got {fmt!r}")


def parse_report(text: str) -> BenchReport:
    """Inverse of emit_report(..., "json")."""
    doc = json.loads(text)
    return BenchReport(
        model_id=doc["model"],
        config=ModelConfig(**doc["config"]),
        element_width=doc["element_width"],
        samples=[BenchSample(**s) for s in doc["samples"]],
        repetitions=doc["repetitions"],
        timer_resolution_s=doc["timer_resolution_s"],
    )


def write_report(report: BenchReport, path: str, fmt: str = "json") -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(emit_report(report, fmt))


def write_step_flops(config: ModelConfig) -> int:
    """Cost of one write-path step (mul/add/exp each count 1).

    Per head: two input projections, slot scores, softmax, outer-product
    accumulate. Independent of context length by construction.
    """
    m, dm, dk, dv = config.n_slots, config.d_model, config.d_k, config.d_v
    per_head = (
        2 * dm * dk          # write query
        + 2 * dm * dv        # write value
        + 2 * m * dk         # scores against slot keys
        + (m if config.score_scale != "none" else 0)
        + 5 * m              # softmax: max, sub, exp, sum, div
        + 2 * m * dv         # outer product + accumulate
    )
    return config.n_heads * per_head


def write_sequence_flops(config: ModelConfig, n_tokens: int) -> int:
    """Exactly n_tokens times the per-step cost; no term grows with n_tokens."""
    return n_tokens * write_step_flops(config)
