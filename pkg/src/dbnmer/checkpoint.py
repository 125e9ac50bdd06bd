"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"DBNT0001"
    u32 metadata length, UTF-8 JSON metadata
    u32 entry count
    per entry: u16 name length, UTF-8 name, u8 ndim, ndim × u32 extents,
               prod(extents) × f64 values
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DBNT0001"


class CheckpointError(ValueError):
    pass


def save(path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to 1-d
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:8]!r}")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    (mlen,) = take("<I")
    meta = json.loads(raw[pos:pos + mlen].decode("utf-8"))
    pos += mlen
    (count,) = take("<I")
    out = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I") if ndim else ()
        n = int(np.prod(shape)) if ndim else 1
        if pos + 8 * n > len(raw):
            raise CheckpointError(f"{path}: truncated data for {name}")
        out[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")
    return out, meta


def save_model(path, model, extra: dict[str, np.ndarray] | None = None, metadata: dict | None = None) -> None:
    tensors = {f"param/{k}": v for k, v in model.state_dict().items()}
    for k, v in (extra or {}).items():
        tensors[f"extra/{k}"] = v
    meta = {"model": model.config.to_dict(), "vocab": model.vocab.tokens}
    meta.update(metadata or {})
    save(path, tensors, meta)


def load_model(path):
    """Rebuild a :class:`~dbnmer.model.DBN` and validate every stored shape against it."""
    from .model import DBN, ModelConfig
    from .vocab import Vocabulary

    tensors, meta = load(path)
    try:
        model = DBN(Vocabulary(meta["vocab"]), ModelConfig.from_dict(meta["model"]))
    except KeyError as exc:
        raise CheckpointError(f"{path}: metadata lacks {exc}") from None
    params = {k[len("param/"):]: v for k, v in tensors.items() if k.startswith("param/")}
    extra = {k[len("extra/"):]: v for k, v in tensors.items() if k.startswith("extra/")}
    try:
        model.load_state_dict(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return model, extra, meta
