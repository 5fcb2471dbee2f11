"""Checkpoint file format.

Layout: the 8-byte magic ``NPBECKP1``, an unsigned 64-bit little-endian
header length, a UTF-8 JSON header, then every tensor as contiguous
little-endian float32 in header order.  The header lists each tensor's name,
group ("param" or "optim") and shape, the payload's sha256, and free-form
metadata (model dims, epoch, RNG state, curriculum).  Files are written to a
temporary name and renamed into place, so a crash never leaves a truncated
checkpoint behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NPBECKP1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    params: dict[str, np.ndarray],
    optim: dict[str, np.ndarray] | None = None,
    meta: dict | None = None,
) -> Path:
    path = Path(path)
    entries = []
    chunks = []
    for group, tensors in (("param", params), ("optim", optim or {})):
        for name, arr in tensors.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            entries.append({"name": name, "group": group, "shape": list(a.shape)})
            chunks.append(a.tobytes())
    payload = b"".join(chunks)
    header = {
        "version": VERSION,
        "tensors": entries,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(head)))
        f.write(head)
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], dict]:
    """Returns (params, optimizer state, metadata)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc.strerror})") from exc
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    payload = raw[16 + n:]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    params: dict[str, np.ndarray] = {}
    optim: dict[str, np.ndarray] = {}
    off = 0
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=off).reshape(e["shape"]).astype(np.float32)
        off += 4 * count
        (params if e["group"] == "param" else optim)[e["name"]] = arr
    if off != len(payload):
        raise CheckpointError(f"{path}: payload size does not match header")
    return params, optim, header["meta"]
