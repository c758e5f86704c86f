"""Command-line entry point: verify / train / bench / demo.

Exit codes: 0 success; 2 invalid usage or configuration (argparse uses the
same code for unknown flags); 3 invariant or verification failure; 4 I/O
failure. The BCT_ELEMENT_WIDTH environment variable (32 or 64) overrides the
element width; without it, bench runs at 32-bit (realistic inference width)
and everything else at 64-bit.

Config files use the flat key=value format (see serialize); command-line
flags override file values.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import bench as bench_mod
from . import numerics as num
from . import serialize
from .core import (
    ConfigError,
    ModelConfig,
    decode_step,
    init_layer,
    initial_state,
    project_write,
    write_weights,
)
from .training import TaskSpec, task_model_config, train_loop
from .verify import run_invariant_suite


@dataclass
class CliConfig:
    """Parsed invocation: one subcommand plus shared flags."""

    subcommand: str
    config_path: str | None
    out_dir: str
    seed: int | None
    fmt: str
    verbosity: int


def _load_model_config(cc: CliConfig, default: ModelConfig) -> ModelConfig:
    config = serialize.load_config(cc.config_path) if cc.config_path else default
    if cc.seed is not None:
        config = replace(config, seed=cc.seed)
    return config


def _fmt_vec(v: np.ndarray) -> str:
    return np.array2string(np.asarray(v).ravel(), precision=3, suppress_small=False,
                           floatmode="fixed", separator=", ")


def cmd_verify(cc: CliConfig) -> int:
    results = run_invariant_suite(seed=cc.seed or 0)
    width = max(len(r.name) for r in results)
    for r in results:
        line = f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}"
        if cc.verbosity or not r.passed:
            line += f"  {r.detail}"
        print(line)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} invariants passed")
    return 0 if not failed else 3


def cmd_bench(cc: CliConfig, lengths: list[int] | None, reps: int) -> int:
    config = _load_model_config(
        cc, ModelConfig(d_model=128, d_k=128, d_v=128, n_slots=256, seed=cc.seed or 0))
    if lengths is None:
        m = config.n_slots
        lengths = [max(1, m // 2), m, 2 * m, 4 * m]
    os.makedirs(cc.out_dir, exist_ok=True)
    paths = []
    for model_id in ("bct", "baseline"):
        mem = bench_mod.measure_memory(model_id, config, lengths)
        lat = bench_mod.measure_latency(model_id, config, lengths, reps=reps)
        report = bench_mod.merge_reports(mem, lat)
        path = os.path.join(cc.out_dir, f"bench_{model_id}.{cc.fmt}")
        bench_mod.write_report(report, path, cc.fmt)
        paths.append(path)
        if cc.verbosity:
            print(f"[{model_id}] timer resolution {report.timer_resolution_s:.1e}s, "
                  f"{report.repetitions} reps")
        for s in report.samples:
            flag = "  (timer unreliable)" if s.unreliable_timer else ""
            print(f"{model_id:>8}  N={s.context_length:<6} cache={s.cache_bytes:>10} B  "
                  f"median={s.latency_median_s:.3e}s  p90={s.latency_p90_s:.3e}s{flag}")
    print("wrote " + ", ".join(paths))
    return 0


def cmd_train(cc: CliConfig, task_kind: str, vocab: int, seq_len: int, offset: int,
              n_slots: int, steps: int, lr: float, batch_size: int) -> int:
    task = TaskSpec(kind=task_kind, vocab=vocab, seq_len=seq_len, offset=offset)
    default = task_model_config(task, n_slots=n_slots, seed=cc.seed or 0)
    config = _load_model_config(cc, default)
    rng = num.make_rng(config.seed)
    result = train_loop(config, task, steps=steps, lr=lr, rng=rng, batch_size=batch_size)
    os.makedirs(cc.out_dir, exist_ok=True)
    curve_path = os.path.join(cc.out_dir, "train_curve.csv")
    with open(curve_path, "w", encoding="utf-8") as f:
        f.write(result.curve_csv())
    ckpt_path = os.path.join(cc.out_dir, "train_checkpoint.bin")
    entries = {name: getattr(result.params, name) for name in
               ("w_write_query", "w_write_value", "w_read_query", "w_out", "slot_keys")}
    entries["head_weight"] = result.head_weight
    entries["head_bias"] = result.head_bias.reshape(1, -1)
    serialize.save_tensors(ckpt_path, entries)
    if result.diverged_at is not None:
        print(f"DIVERGED at step {result.diverged_at} (loss non-finite); "
              f"partial curve written to {curve_path}")
    chance = 1.0 / task.vocab
    print(f"{task.kind}: {len(result.losses)} steps, final loss {result.losses[-1]:.4f}, "
          f"held-out accuracy {result.final_accuracy:.4f} (chance {chance:.4f})")
    print(f"wrote {curve_path}, {ckpt_path}")
    return 0


def demo_transcript(config: ModelConfig, xs: np.ndarray, params) -> tuple[str, np.ndarray]:
    """Step-by-step rendering of the write path for a tiny instance.

    Returns the transcript and the final slot values (head 0) so callers can
    cross-check against the sequential update path.
    """
    state = initial_state(params, config)
    lines = [f"bounded-cache write path: {xs.shape[0]} tokens, "
             f"{config.n_slots} slots, d_model={config.d_model} (seed {config.seed})"]
    for t in range(xs.shape[0]):
        x = xs[t : t + 1]
        wq, wv = project_write(x, params, 0)
        scores = wq @ state.keys[0].T * config.score_multiplier()
        ww = write_weights(wq, state.keys[0], config.score_scale)
        before = state.values.copy()
        _, state = decode_step(x, state, params, config)
        delta = state.values[0] - before[0]
        lines.append(f"token {t + 1}: x            {_fmt_vec(x)}")
        lines.append(f"  write query   {_fmt_vec(wq)}")
        lines.append(f"  write value   {_fmt_vec(wv)}")
        lines.append(f"  slot scores   {_fmt_vec(scores)}")
        lines.append(f"  write weights {_fmt_vec(ww)}")
        for r in range(config.n_slots):
            label = "  value delta  " if r == 0 else "               "
            lines.append(f"{label} slot {r}: {_fmt_vec(delta[r])}")
    lines.append("final slot values:")
    for r in range(config.n_slots):
        lines.append(f"  slot {r}: {_fmt_vec(state.values[0][r])}")
    return "\n".join(lines) + "\n", state.values[0]


def cmd_demo(cc: CliConfig, tokens: int) -> int:
    config = _load_model_config(
        cc, ModelConfig(d_model=4, d_k=4, d_v=4, n_slots=4, seed=cc.seed or 0))
    if config.n_slots > 8 or max(config.d_model, config.d_k, config.d_v) > 4 or config.n_heads != 1:
        raise ConfigError(
            "demo is for human-readable sizes: n_slots <= 8, dims <= 4, one head")
    params, _ = init_layer(config, num.make_rng(config.seed))
    xs = num.make_rng(config.seed + 1).standard_normal(
        (tokens, config.d_model)).astype(num.active_dtype())
    text, _ = demo_transcript(config, xs, params)
    print(text, end="")
    return 0


def _add_common(sp, *, config=False, out=False, fmt=False):
    sp.add_argument("--seed", type=int, default=None, help="seed override")
    sp.add_argument("-v", "--verbose", action="count", default=0, dest="verbosity")
    if config:
        sp.add_argument("--config", default=None, metavar="PATH",
                        help="model config file (key=value lines)")
    if out:
        sp.add_argument("--out", default=".", metavar="PATH", help="output directory")
    if fmt:
        sp.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bct",
        description="Bounded-cache attention: verification, training, benchmarks, demo.")
    sub = p.add_subparsers(dest="subcommand", required=True)

    _add_common(sub.add_parser("verify", help="run the invariant suite"))

    b = sub.add_parser("bench", help="memory and latency reports for both models")
    _add_common(b, config=True, out=True, fmt=True)
    b.add_argument("--lengths", default=None,
                   help="comma-separated context lengths (default ladder around n_slots)")
    b.add_argument("--reps", type=int, default=9, help="timing repetitions (>= 5)")

    t = sub.add_parser("train", help="train on a synthetic task, write curve + checkpoint")
    _add_common(t, config=True, out=True)
    t.add_argument("--task", choices=("copy", "assoc_recall"), default="copy")
    t.add_argument("--vocab", type=int, default=16)
    t.add_argument("--seq-len", type=int, default=16)
    t.add_argument("--offset", type=int, default=1, help="copy delay")
    t.add_argument("--slots", type=int, default=32, help="cache capacity")
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--batch-size", type=int, default=8)

    d = sub.add_parser("demo", help="print the write path step by step on a tiny instance")
    _add_common(d, config=True)
    d.add_argument("--tokens", type=int, default=3)
    return p


def _apply_element_width(subcommand: str) -> None:
    raw = os.environ.get("BCT_ELEMENT_WIDTH")
    if raw is None:
        num.set_element_width(32 if subcommand == "bench" else 64)
        return
    if raw not in ("32", "64"):
        raise ConfigError(f"BCT_ELEMENT_WIDTH must be 32 or 64, got {raw!r}")
    num.set_element_width(int(raw))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cc = CliConfig(
        subcommand=args.subcommand,
        config_path=getattr(args, "config", None),
        out_dir=getattr(args, "out", "."),
        seed=args.seed,
        fmt=getattr(args, "fmt", "csv"),
        verbosity=args.verbosity,
    )
    try:
        _apply_element_width(cc.subcommand)
        if cc.subcommand == "verify":
            return cmd_verify(cc)
        if cc.subcommand == "bench":
            lengths = None
            if args.lengths is not None:
                lengths = [int(tok) for tok in args.lengths.split(",") if tok.strip()]
            return cmd_bench(cc, lengths, args.reps)
        if cc.subcommand == "train":
            return cmd_train(cc, args.task, args.vocab, args.seq_len, args.offset,
                             args.slots, args.steps, args.lr, args.batch_size)
        return cmd_demo(cc, args.tokens)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
