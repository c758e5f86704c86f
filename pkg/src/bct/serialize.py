"""On-disk formats: flat binary tensor container, key=value config text.

Binary container (little-endian throughout):

    magic   4 bytes  b"BCTB"
    version u16      currently 1
    width   u16      element width in bits, 32 or 64; all entries share it
    count   u32      number of named entries
    then per entry:  name_len u16, name utf-8, ndim u8, dims u64 * ndim
    then payloads:   row-major scalars, entry order, width bits each

Loaded arrays come back at the width stored in the file, regardless of the
active element width.

Config text is one `key=value` per line; blank lines and `#` comments are
ignored; unknown keys are errors.
"""

from __future__ import annotations

import struct
from dataclasses import fields

import numpy as np

from .core import CacheState, ConfigError, LayerParams, ModelConfig

MAGIC = b"BCTB"
VERSION = 1

_WIDTH_OF = {np.dtype(np.float32): 32, np.dtype(np.float64): 64}
_DTYPE_OF = {32: np.dtype("<f4"), 64: np.dtype("<f8")}


class FormatError(ValueError):
    """Corrupt or unsupported container contents."""


def save_tensors(path: str, entries: dict[str, np.ndarray]) -> None:
    """Write named float arrays to one container file.

    All entries must share one float32/float64 dtype.
    """
    widths = {_WIDTH_OF.get(np.asarray(a).dtype) for a in entries.values()}
    if len(entries) == 0 or None in widths or len(widths) != 1:
        raise FormatError(f"entries must share one float32/float64 dtype, got widths {widths}")
    width = widths.pop()
    header = [MAGIC, struct.pack("<HHI", VERSION, width, len(entries))]
    payload = []
    for name, arr in entries.items():
        arr = np.ascontiguousarray(arr, dtype=_DTYPE_OF[width])
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)))
        header.append(raw)
        header.append(struct.pack("<B", arr.ndim))
        header.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        payload.append(arr.tobytes(order="C"))
    with open(path, "wb") as f:
        f.write(b"".join(header))
        f.write(b"".join(payload))


def load_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"{path}: truncated while reading {what}")
        out = blob[off : off + n]
        off += n
        return out

    off = 0
    if take(4, "magic") != MAGIC:
        raise FormatError(f"{path}: bad magic, not a tensor container")
    version, width, count = struct.unpack("<HHI", take(8, "header"))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if width not in _DTYPE_OF:
        raise FormatError(f"{path}: unsupported element width {width}")
    shapes = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim, "dims"))
        shapes.append((name, dims))
    out = {}
    dtype = _DTYPE_OF[width]
    for name, dims in shapes:
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = take(size * dtype.itemsize, f"payload of {name}")
        out[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    return out


_PARAM_FIELDS = ("w_write_query", "w_write_value", "w_read_query", "w_out", "slot_keys")


def save_params(path: str, params: LayerParams) -> None:
    save_tensors(path, {name: getattr(params, name) for name in _PARAM_FIELDS})


def load_params(path: str) -> LayerParams:
    entries = load_tensors(path)
    missing = [n for n in _PARAM_FIELDS if n not in entries]
    if missing:
        raise FormatError(f"{path}: missing parameter entries {missing}")
    return LayerParams(**{name: entries[name] for name in _PARAM_FIELDS})


_BASELINE_FIELDS = ("w_query", "w_key", "w_value", "w_out")


def save_baseline_params(path: str, params) -> None:
    save_tensors(path, {name: getattr(params, name) for name in _BASELINE_FIELDS})


def load_baseline_params(path: str):
    from .baseline import BaselineParams

    entries = load_tensors(path)
    missing = [n for n in _BASELINE_FIELDS if n not in entries]
    if missing:
        raise FormatError(f"{path}: missing parameter entries {missing}")
    return BaselineParams(**{name: entries[name] for name in _BASELINE_FIELDS})


def save_state(path: str, state: CacheState) -> None:
    # tokens_seen is metadata; stored as a 1x1 entry so the container stays tensors-only
    counter = np.full((1, 1), float(state.tokens_seen), dtype=state.values.dtype)
    save_tensors(path, {"keys": state.keys, "values": state.values, "tokens_seen": counter})


def load_state(path: str) -> CacheState:
    entries = load_tensors(path)
    missing = [n for n in ("keys", "values", "tokens_seen") if n not in entries]
    if missing:
        raise FormatError(f"{path}: missing state entries {missing}")
    return CacheState(
        keys=entries["keys"],
        values=entries["values"],
        tokens_seen=int(round(float(entries["tokens_seen"][0, 0]))),
    )


_INT_KEYS = {"d_model", "d_k", "d_v", "n_slots", "n_heads", "seed"}
_STR_KEYS = {"score_scale", "value_init"}


def config_to_text(config: ModelConfig) -> str:
    lines = [f"{f.name}={getattr(config, f.name)}" for f in fields(config)]
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> ModelConfig:
    kv: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _INT_KEYS:
            try:
                kv[key] = int(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} must be an integer, got {value!r}") from None
        elif key in _STR_KEYS:
            kv[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    required = {"d_model", "d_k", "d_v", "n_slots"}
    missing = sorted(required - kv.keys())
    if missing:
        raise ConfigError(f"missing required config keys: {missing}")
    return ModelConfig(**kv)  # type: ignore[arg-type]


def save_config(path: str, config: ModelConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(config_to_text(config))


def load_config(path: str) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as f:
        return config_from_text(f.read())
