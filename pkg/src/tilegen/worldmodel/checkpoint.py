"""Self-describing checkpoint container: JSON header + raw f32 tensors."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TGCK"
VERSION = 1

_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: dict[str, np.ndarray]
    step: int
    extra: dict


def save_checkpoint(
    path: str | Path,
    kind: str,
    config: dict,
    tensors: dict[str, np.ndarray],
    step: int = 0,
    extra: dict | None = None,
) -> None:
    arrays = {}
    manifest = []
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f4")
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        arrays[name] = arr
        manifest.append({"name": name, "shape": list(arr.shape)})
    header = {
        "kind": kind,
        "config": config,
        "step": int(step),
        "extra": extra or {},
        "tensors": manifest,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for name in arrays:
            fh.write(arrays[name].tobytes())
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if len(data) < _PREFIX.size + hlen:
        raise CheckpointError(f"{path}: truncated header JSON")
    try:
        header = json.loads(data[_PREFIX.size : _PREFIX.size + hlen])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    offset = _PREFIX.size + hlen
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']!r}")
        flat = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        tensors[entry["name"]] = flat.reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return Checkpoint(
        kind=header["kind"],
        config=header["config"],
        tensors=tensors,
        step=int(header.get("step", 0)),
        extra=header.get("extra", {}),
    )
