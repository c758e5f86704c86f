"""Bounded-cache attention: a fixed-capacity key/value memory written by
softmax-weighted outer products, with an unbounded-cache causal-attention
baseline, exact gradients, and memory/latency benchmarks."""

from .baseline import (
    BaselineParams,
    GrowingCache,
    baseline_step,
    empty_cache,
    full_causal_attention,
    init_baseline,
    prefill_cache,
)
from .bench import (
    BenchReport,
    BenchSample,
    analytic_cache_bytes,
    emit_report,
    measure_latency,
    measure_memory,
    merge_reports,
    parse_report,
    write_report,
    write_sequence_flops,
    write_step_flops,
)
from .core import (
    CacheState,
    ConfigError,
    LayerParams,
    ModelConfig,
    decode_step,
    init_layer,
    initial_state,
    layer_forward,
    project_write,
    read_cache,
    update_cache,
    update_parallel,
    update_sequence,
    write_weights,
)
from .numerics import (
    DimensionError,
    NumericError,
    active_dtype,
    element_width,
    make_rng,
    matmul,
    matrix,
    outer,
    precision,
    set_element_width,
    softmax_row,
)
from .training import (
    GradCheckReport,
    Gradients,
    TaskBatch,
    TaskSpec,
    TrainResult,
    finite_difference_gradients,
    gen_task,
    grad_check,
    layer_backward,
    task_d_model,
    task_model_config,
    train_loop,
)
from .verify import CheckResult, norm_relative_error, run_invariant_suite

__version__ = "0.1.0"
