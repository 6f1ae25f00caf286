"""Flat binary checkpoint archive for named float64 arrays.

Byte layout (all integers little-endian, documented in docs/formats.md):

    offset 0   magic  b"MRCK"
    offset 4   u32    format version (currently 1)
    offset 8   u32    manifest byte length L
    offset 12  L bytes of UTF-8 JSON manifest
    then one entry per array, sorted by name:
        u16    name byte length n
        n      UTF-8 name
        u8     ndim
        ndim * u32 dims
        prod(dims) * f64 little-endian values, row-major

The manifest always carries ``format_version``, ``config_hash`` and
``entry_count``; stages add their own metadata under ``meta``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "load_into", "CheckpointError"]

MAGIC = b"MRCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint file or incompatible contents."""


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    config_hash: str, meta: dict | None = None) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "entry_count": len(arrays),
        "meta": meta or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name in sorted(arrays):
            # note: ascontiguousarray would promote 0-d scalars to 1-d
            arr = np.asarray(arrays[name], dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return (manifest, {name: float64 array})."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, mlen = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    try:
        manifest = json.loads(raw[12:12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad manifest: {exc}") from exc
    arrays: dict[str, np.ndarray] = {}
    pos = 12 + mlen
    end = len(raw)
    while pos < end:
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", raw, pos) if ndim else ()
        pos += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        nbytes = 8 * count
        if pos + nbytes > end:
            raise CheckpointError(f"{path}: truncated data for entry {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count,
                                     offset=pos).astype(np.float64).reshape(dims)
        pos += nbytes
    if len(arrays) != manifest.get("entry_count", len(arrays)):
        raise CheckpointError(
            f"{path}: manifest lists {manifest.get('entry_count')} entries, "
            f"found {len(arrays)}")
    return manifest, arrays


def load_into(params: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into live parameters; shapes must match exactly."""
    for name, p in params.items():
        if name not in arrays:
            raise CheckpointError(f"checkpoint is missing entry {name!r}")
        arr = arrays[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape}, "
                f"model {p.data.shape}")
        p.data = np.array(arr, dtype=np.float64)
        p.grad = None
