#!/usr/bin/env python3
"""Sweep cache memory and decode latency for both models and write reports.

Wider ladder than the CLI default, meant for producing the flat-vs-linear
curves. Writes bench_bct.json and bench_baseline.json into --out.

Usage:
    python scripts/run_bench.py --out reports [--slots 256] [--reps 15]
"""

import argparse
import os

from bct import numerics as num
from bct.bench import measure_latency, measure_memory, merge_reports, write_report
from bct.core import ModelConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="reports")
    ap.add_argument("--slots", type=int, default=256)
    ap.add_argument("--d-model", type=int, default=128)
    ap.add_argument("--reps", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--width", type=int, default=32, choices=(32, 64))
    args = ap.parse_args()

    num.set_element_width(args.width)
    config = ModelConfig(d_model=args.d_model, d_k=args.d_model, d_v=args.d_model,
                         n_slots=args.slots, seed=args.seed)
    m = args.slots
    lengths = sorted({max(1, m // 4), m // 2, m, 2 * m, 4 * m, 8 * m, 16 * m})
    os.makedirs(args.out, exist_ok=True)

    for model_id in ("bct", "baseline"):
        mem = measure_memory(model_id, config, lengths)
        lat = measure_latency(model_id, config, lengths, reps=args.reps)
        report = merge_reports(mem, lat)
        path = os.path.join(args.out, f"bench_{model_id}.json")
        write_report(report, path, "json")
        print(f"{model_id}: wrote {path}")
        for s in report.samples:
            print(f"  N={s.context_length:<6} cache={s.cache_bytes:>10} B  "
                  f"median={s.latency_median_s:.3e}s")


if __name__ == "__main__":
    main()
