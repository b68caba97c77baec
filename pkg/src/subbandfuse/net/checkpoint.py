"""Checkpoint files.

Layout (little-endian)::

    b"SBCK" | version u16 | config length u32 | config JSON (UTF-8)
    | optimizer step u64 | tensor count u32
    | per tensor: name length u16 | name | ndim u8 | dims u32 * ndim | float32 payload

Loading parses and validates the whole file before touching the model, so
a corrupt file never leaves a half-loaded state behind.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .senet import ModelState, SenetConfig, init_model

MAGIC = b"SBCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(state: ModelState, path) -> None:
    cfg = state.config.to_json().encode("utf-8")
    tensors = list(state.tensors())
    parts = [MAGIC, struct.pack("<HI", VERSION, len(cfg)), cfg, struct.pack("<QI", state.step, len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size))


def read_checkpoint(path) -> tuple[SenetConfig, int, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, cfg_len = r.unpack("HI")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    cfg = SenetConfig.from_json(r.take(cfg_len).decode("utf-8"))
    step, count = r.unpack("QI")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("B")
        dims = r.unpack(f"{ndim}I") if ndim else ()
        n = int(np.prod(dims)) if dims else 1
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: trailing bytes after tensor table")
    return cfg, step, tensors


def load_checkpoint(path, state: ModelState | None = None) -> ModelState:
    """Load into a fresh model (``state=None``) or into ``state`` after checking shapes."""
    cfg, step, tensors = read_checkpoint(path)
    if state is None:
        state = init_model(cfg)
    expected = dict(state.tensors())
    for name, arr in expected.items():
        got = tensors.get(name)
        if got is None or got.shape != arr.shape:
            found = "missing" if got is None else f"shape {got.shape}"
            raise CheckpointError(f"tensor {name!r} mismatch: model expects {arr.shape}, checkpoint has {found}")
    extra = sorted(set(tensors) - set(expected))
    if extra:
        raise CheckpointError(f"checkpoint has unexpected tensor {extra[0]!r}")
    tables = {"param": state.params, "buffer": state.buffers, "adam_m": state.adam_m, "adam_v": state.adam_v}
    for name, arr in tensors.items():
        prefix, key = name.split(":", 1)
        table = tables[prefix]
        table[key] = arr.astype(table[key].dtype)
    state.step = step
    return state
