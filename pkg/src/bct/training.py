"""Desk-scale learning on the bounded-cache layer.

Provides exact analytic gradients (hand-written reverse pass, no autodiff
framework, so the finite-difference check is a genuine two-implementation
cross-check), a finite-difference verifier, synthetic copy / associative
recall tasks, and a plain-SGD loop with a linear classifier head.

Task embeddings are one-hot based:

  copy          [token one-hot ; position one-hot]  -> d_model = vocab + seq_len
  assoc_recall  [key one-hot ; value one-hot]       -> d_model = 2 * vocab

The write path is order-invariant (slot keys are fixed during a pass), so
offset-copy is unlearnable from token identity alone; the position block is
what makes the task a meaningful probe. Associative recall presents each
key/value pairing as a single position, since a single additive-write layer
has no cross-token interaction at write time.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import numerics as num
from .core import (
    ConfigError,
    LayerParams,
    ModelConfig,
    init_layer,
    initial_state,
    layer_forward,
)


@dataclass
class Gradients:
    """Gradient for every LayerParams entry, same shapes and field names."""

    w_write_query: np.ndarray
    w_write_value: np.ndarray
    w_read_query: np.ndarray
    w_out: np.ndarray
    slot_keys: np.ndarray


PARAM_NAMES = tuple(f.name for f in fields(Gradients))


def zeros_gradients(params: LayerParams) -> Gradients:
    return Gradients(**{n: np.zeros_like(getattr(params, n)) for n in PARAM_NAMES})


def accumulate(into: Gradients, grads: Gradients) -> None:
    for n in PARAM_NAMES:
        getattr(into, n).__iadd__(getattr(grads, n))


def layer_backward(
    xs: np.ndarray, params: LayerParams, config: ModelConfig, upstream: np.ndarray
) -> Gradients:
    """Exact gradients of <upstream, layer_forward(xs)[0]> w.r.t. every parameter.

    Replays the forward pass with a tape, then walks tokens in reverse. The
    slot-value recurrence means a write at step t influences every read at
    steps >= t; that is handled with a running suffix accumulator of
    read-side gradients. Assumes the default wiring where the cache keys are
    the learnable slot keys.
    """
    n = xs.shape[0]
    if upstream.shape != (n, config.d_model):
        raise num.DimensionError(
            f"upstream must match outputs {(n, config.d_model)}, got {upstream.shape}"
        )
    s = config.score_multiplier()
    grads = zeros_gradients(params)
    state0 = initial_state(params, config)
    dv = config.d_v

    for h in range(config.n_heads):
        keys = params.slot_keys[h]
        w_out_h = params.w_out[h * dv : (h + 1) * dv, :]

        # forward, keeping everything the reverse pass needs
        values = state0.values[h]
        tape = []
        for t in range(n):
            x = xs[t : t + 1]
            wq = x @ params.w_write_query[h]
            wv = x @ params.w_write_value[h]
            ww = num.softmax_row((wq @ keys.T) * s)
            values = values + ww.T @ wv
            rq = x @ params.w_read_query[h]
            rw = num.softmax_row((rq @ keys.T) * s)
            tape.append((wq, wv, ww, rq, rw, values, rw @ values))

        # reverse; suffix holds dL/d(values_t) summed over reads at steps >= t
        suffix = np.zeros_like(values)
        for t in range(n - 1, -1, -1):
            wq, wv, ww, rq, rw, values_t, read = tape[t]
            x = xs[t : t + 1]
            u = upstream[t : t + 1]
            g_read = u @ w_out_h.T
            grads.w_out[h * dv : (h + 1) * dv, :] += read.T @ u

            d_rw = g_read @ values_t.T
            d_rscore = rw * (d_rw - float((d_rw * rw).sum()))
            grads.w_read_query[h] += x.T @ ((d_rscore @ keys) * s)
            grads.slot_keys[h] += (d_rscore.T @ rq) * s

            suffix += rw.T @ g_read
            d_ww = wv @ suffix.T
            d_wv = ww @ suffix
            d_wscore = ww * (d_ww - float((d_ww * ww).sum()))
            grads.w_write_query[h] += x.T @ ((d_wscore @ keys) * s)
            grads.slot_keys[h] += (d_wscore.T @ wq) * s
            grads.w_write_value[h] += x.T @ d_wv

    return grads


def objective(xs: np.ndarray, params: LayerParams, config: ModelConfig, upstream: np.ndarray) -> float:
    """Scalar probe the gradient definitions refer to: <upstream, outputs>."""
    ys, _ = layer_forward(xs, params, config)
    return float((upstream * ys).sum())


def finite_difference_gradients(
    xs: np.ndarray,
    params: LayerParams,
    config: ModelConfig,
    upstream: np.ndarray,
    epsilon: float = 1e-5,
) -> Gradients:
    """Central differences over every parameter entry (the slow oracle)."""
    grads = zeros_gradients(params)
    for name in PARAM_NAMES:
        w = getattr(params, name)
        g = getattr(grads, name)
        for i in range(w.size):
            orig = w.flat[i]
            w.flat[i] = orig + epsilon
            plus = objective(xs, params, config, upstream)
            w.flat[i] = orig - epsilon
            minus = objective(xs, params, config, upstream)
            w.flat[i] = orig
            g.flat[i] = (plus - minus) / (2.0 * epsilon)
    return grads


@dataclass
class GradCheckReport:
    """Per-parameter worst relative error between analytic and FD gradients."""

    per_param: dict[str, float]
    worst: float
    epsilon: float
    seq_len: int

    def lines(self) -> list[str]:
        out = [f"{name}: {err:.3e}" for name, err in self.per_param.items()]
        out.append(f"worst: {self.worst:.3e} (epsilon={self.epsilon:g}, seq_len={self.seq_len})")
        return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(|a|, |b|, 1e-8), element-wise."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float((np.abs(a - b) / denom).max())


def grad_check(
    config: ModelConfig,
    rng: np.random.Generator,
    epsilon: float = 1e-5,
    seq_len: int = 6,
) -> GradCheckReport:
    """Compare layer_backward against central differences on a random instance.

    Check failures are reported in the returned record, never raised.
    Requires 64-bit mode: 32-bit FD quotients are pure noise at useful eps.
    """
    if num.element_width() != 64:
        raise ConfigError("grad_check requires 64-bit element width")
    params, _ = init_layer(config, rng)
    xs = rng.standard_normal((seq_len, config.d_model))
    upstream = rng.standard_normal((seq_len, config.d_model))
    analytic = layer_backward(xs, params, config, upstream)
    numeric = finite_difference_gradients(xs, params, config, upstream, epsilon)
    per_param = {
        name: relative_error(getattr(analytic, name), getattr(numeric, name))
        for name in PARAM_NAMES
    }
    return GradCheckReport(
        per_param=per_param,
        worst=max(per_param.values()),
        epsilon=epsilon,
        seq_len=seq_len,
    )


# --------------------------------------------------------------------------
# synthetic tasks


@dataclass
class TaskBatch:
    """inputs: (B, N, d_model) embedded tokens; targets: (B, N) class ids,
    -1 marks unscored positions; task_kind: "copy" | "assoc_recall"."""

    inputs: np.ndarray
    targets: np.ndarray
    task_kind: str


TASK_KINDS = ("copy", "assoc_recall")


def task_d_model(kind: str, vocab: int, seq_len: int) -> int:
    if kind == "copy":
        return vocab + seq_len
    if kind == "assoc_recall":
        return 2 * vocab
    raise ConfigError(f"task kind must be one of {TASK_KINDS}, got {kind!r}")


def gen_task(
    kind: str,
    batch_size: int,
    seq_len: int,
    vocab: int,
    n_slots: int,
    rng: np.random.Generator,
    offset: int = 1,
) -> TaskBatch:
    """Sample one batch of synthetic sequences.

    copy: targets are the inputs delayed by `offset`; the first `offset`
    positions are unscored.

    assoc_recall: the first half of the sequence presents key->value pairs
    (one pair per position), the second half queries each presented key once
    in shuffled order; targets at query positions are the paired values.
    Keys are distinct within a sequence and every queried key was presented
    earlier in it.
    """
    if seq_len < 2 or vocab < 2 or batch_size < 1:
        raise ConfigError(f"need seq_len >= 2, vocab >= 2, batch_size >= 1; "
                          f"got {seq_len}, {vocab}, {batch_size}")
    d_model = task_d_model(kind, vocab, seq_len)
    dtype = num.active_dtype()
    inputs = np.zeros((batch_size, seq_len, d_model), dtype=dtype)
    targets = np.full((batch_size, seq_len), -1, dtype=np.int64)

    if kind == "copy":
        if not 1 <= offset < seq_len:
            raise ConfigError(f"copy offset must be in [1, seq_len), got {offset}")
        tokens = rng.integers(0, vocab, size=(batch_size, seq_len))
        rows = np.arange(batch_size)[:, None]
        cols = np.arange(seq_len)[None, :]
        inputs[rows, cols, tokens] = 1.0
        inputs[rows, cols, vocab + cols] = 1.0
        targets[:, offset:] = tokens[:, :-offset]
    else:
        if seq_len % 2 != 0:
            raise ConfigError(f"assoc_recall needs an even seq_len, got {seq_len}")
        pairs = seq_len // 2
        if pairs > n_slots:
            raise ConfigError(f"assoc_recall pair count {pairs} exceeds cache slots {n_slots}")
        if pairs > vocab:
            raise ConfigError(f"assoc_recall pair count {pairs} exceeds vocab {vocab}")
        for b in range(batch_size):
            keys = rng.permutation(vocab)[:pairs]
            vals = rng.integers(0, vocab, size=pairs)
            for i in range(pairs):
                inputs[b, i, keys[i]] = 1.0
                inputs[b, i, vocab + vals[i]] = 1.0
            for q, i in enumerate(rng.permutation(pairs)):
                inputs[b, pairs + q, keys[i]] = 1.0
                targets[b, pairs + q] = vals[i]
    return TaskBatch(inputs=inputs, targets=targets, task_kind=kind)


# --------------------------------------------------------------------------
# SGD loop


@dataclass(frozen=True)
class TaskSpec:
    """What to train on; dimensions derive the required d_model."""

    kind: str = "copy"
    vocab: int = 16
    seq_len: int = 16
    offset: int = 1

    def d_model(self) -> int:
        return task_d_model(self.kind, self.vocab, self.seq_len)


def task_model_config(task: "TaskSpec", n_slots: int, d_k: int | None = None, seed: int = 0) -> ModelConfig:
    """Single-head config sized to a task's embedding width."""
    dm = task.d_model()
    return ModelConfig(d_model=dm, d_k=d_k or dm, d_v=dm, n_slots=n_slots, seed=seed)


@dataclass
class TrainResult:
    """Per-step loss curve, held-out accuracy trace, and the trained weights."""

    losses: np.ndarray
    accuracies: np.ndarray
    final_accuracy: float
    diverged_at: int | None
    params: LayerParams
    head_weight: np.ndarray
    head_bias: np.ndarray

    def curve_csv(self) -> str:
        lines = ["step,loss,accuracy"]
        for i, (lo, ac) in enumerate(zip(self.losses, self.accuracies)):
            lines.append(f"{i},{float(lo)!r},{float(ac)!r}")
        return "\n".join(lines) + "\n"


def _batch_accuracy(batch, params, config, head_weight, head_bias) -> float:
    correct = 0
    total = 0
    for b in range(batch.inputs.shape[0]):
        ys, _ = layer_forward(batch.inputs[b], params, config)
        logits = ys @ head_weight + head_bias
        mask = batch.targets[b] >= 0
        correct += int((logits[mask].argmax(axis=1) == batch.targets[b][mask]).sum())
        total += int(mask.sum())
    return correct / total


def train_loop(
    config: ModelConfig,
    task: TaskSpec,
    steps: int,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = 8,
    holdout_size: int = 64,
    eval_every: int = 100,
) -> TrainResult:
    """Plain SGD on softmax cross-entropy over a linear head on layer outputs.

    Fully deterministic given (seed, config, task): batches are drawn from
    `rng` in a fixed order (held-out batch first), and batch-element
    gradients accumulate in index order. The zero-initialized head makes the
    first-step loss exactly ln(vocab). On divergence (non-finite loss) the
    loop stops and reports the step index; the partial curve is kept.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if lr < 0:
        raise ConfigError(f"lr must be >= 0, got {lr}")
    if config.d_model != task.d_model():
        raise ConfigError(
            f"config.d_model={config.d_model} does not match task embedding width "
            f"{task.d_model()} for {task.kind}"
        )
    vocab = task.vocab
    params, _ = init_layer(config, rng)
    head_weight = np.zeros((config.d_model, vocab), dtype=num.active_dtype())
    head_bias = np.zeros(vocab, dtype=num.active_dtype())

    def draw(n):
        return gen_task(task.kind, n, task.seq_len, vocab, config.n_slots, rng, task.offset)

    holdout = draw(holdout_size)
    losses = np.zeros(steps)
    accuracies = np.zeros(steps)
    acc_now = _batch_accuracy(holdout, params, config, head_weight, head_bias)
    diverged_at = None
    done = 0

    for step in range(steps):
        batch = draw(batch_size)
        n_scored = int((batch.targets >= 0).sum())
        grads = zeros_gradients(params)
        g_head_w = np.zeros_like(head_weight)
        g_head_b = np.zeros_like(head_bias)
        loss = 0.0
        done = step + 1
        try:
            for b in range(batch_size):
                xs = batch.inputs[b]
                tgt = batch.targets[b]
                ys, _ = layer_forward(xs, params, config)
                logits = ys @ head_weight + head_bias
                probs = num.softmax_row(logits)
                mask = tgt >= 0
                safe = np.where(mask, tgt, 0)
                picked = probs[np.arange(task.seq_len), safe]
                with np.errstate(divide="ignore"):  # log(0) -> inf feeds divergence detection
                    loss += float(-np.log(picked[mask]).sum())
                d_logits = probs
                d_logits[np.arange(task.seq_len), safe] -= 1.0
                d_logits[~mask] = 0.0
                d_logits /= n_scored
                g_head_w += ys.T @ d_logits
                g_head_b += d_logits.sum(axis=0)
                accumulate(grads, layer_backward(xs, params, config, d_logits @ head_weight.T))
            loss /= n_scored
        except num.NumericError:
            loss = float("nan")
        losses[step] = loss
        if not np.isfinite(loss):
            diverged_at = step
            accuracies[step] = acc_now
            break
        for name in PARAM_NAMES:
            getattr(params, name).__isub__(lr * getattr(grads, name))
        head_weight -= lr * g_head_w
        head_bias -= lr * g_head_b
        if (step + 1) % eval_every == 0 or step == steps - 1:
            acc_now = _batch_accuracy(holdout, params, config, head_weight, head_bias)
        accuracies[step] = acc_now

    return TrainResult(
        losses=losses[:done],
        accuracies=accuracies[:done],
        final_accuracy=acc_now,
        diverged_at=diverged_at,
        params=params,
        head_weight=head_weight,
        head_bias=head_bias,
    )
