"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian u32 header length, a JSON header
(format version, architecture, variant, metadata, and one entry per array
with key/dtype/shape), then the raw array bytes in header order. Writes
contain no timestamps, so identical state produces identical files, and
round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .layers import Module
from .nets import ArchSpec

MAGIC = b"HZGANCK1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def module_state(module: Module, prefix: str = "") -> dict[str, np.ndarray]:
    """All parameters plus buffers (e.g. batch-norm running stats)."""
    state = {f"{prefix}{name}": p.data for name, p in module.named_parameters()}
    for name, buf in module.named_buffers():
        state[f"{prefix}{name}"] = buf
    return state


def load_module_state(module: Module, state: dict[str, np.ndarray], prefix: str = ""):
    for name, p in module.named_parameters():
        key = f"{prefix}{name}"
        if key not in state:
            raise CheckpointError(f"checkpoint is missing parameter {key!r}")
        saved = state[key]
        if saved.shape != p.data.shape:
            raise CheckpointError(
                f"checkpoint parameter {key!r} has shape {saved.shape}, model expects {p.data.shape}"
            )
        p.data[...] = saved
    buffers = dict(module.named_buffers())
    for name, buf in buffers.items():
        key = f"{prefix}{name}"
        if key in state:
            buf[...] = state[key]


def save_checkpoint(path: str, arch: ArchSpec, variant: str,
                    state: dict[str, np.ndarray], meta: dict | None = None):
    entries = []
    blobs = []
    for key in sorted(state):
        arr = np.ascontiguousarray(state[key])
        entries.append({"key": key, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "arch": arch.to_dict(),
        "variant": variant,
        "meta": meta or {},
        "entries": entries,
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str):
    """Returns (arch, variant, state, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint format version {header.get('format_version')}")
        state = {}
        for entry in header["entries"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise CheckpointError(f"checkpoint truncated while reading {entry['key']!r}")
            state[entry["key"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    arch = ArchSpec.from_dict(header["arch"])
    return arch, header["variant"], state, header.get("meta", {})
