"""Episode file format.

Binary layout, little-endian throughout:

    header: magic "PGEP" | version u32 = 1 | T u32 | H u16 | W u16
            | level_seed u64 | p_random f64          (32 bytes)
    then T records, each:
            frame u8[H*W*3] | action u8 | tile_x u16 | tile_y u16
            | status u8 | events u8                  (H*W*3 + 7 bytes)

The header carries the provenance needed to regenerate the episode, so
read(write(sample)) returns an identical sample.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"PGEP"
VERSION = 1
_HEADER = struct.Struct("<4sIIHHQd")

_META_DTYPE = np.dtype([
    ("action", "u1"),
    ("tile_x", "<u2"),
    ("tile_y", "<u2"),
    ("status", "u1"),
    ("events", "u1"),
])


class FormatError(ValueError):
    """Raised for bad magic, version, or truncated/oversized payloads."""


@dataclass
class EpisodeSample:
    """One recorded episode: frames[t] is the observation before actions[t]
    was taken; tile/status describe the agent at t; events[t] are the event
    flags produced by the step into t (events[0] is always 0)."""

    frames: np.ndarray    # (T, H, W, 3) uint8
    actions: np.ndarray   # (T,) uint8
    tile_x: np.ndarray    # (T,) uint16
    tile_y: np.ndarray    # (T,) uint16
    status: np.ndarray    # (T,) uint8
    events: np.ndarray    # (T,) uint8
    level_seed: int
    p_random: float

    def __post_init__(self):
        t = len(self.frames)
        for name in ("actions", "tile_x", "tile_y", "status", "events"):
            if len(getattr(self, name)) != t:
                raise ValueError(f"{name} length mismatch")

    @property
    def timesteps(self) -> int:
        return len(self.frames)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EpisodeSample):
            return NotImplemented
        return (
            self.level_seed == other.level_seed
            and self.p_random == other.p_random
            and all(
                np.array_equal(getattr(self, n), getattr(other, n))
                for n in ("frames", "actions", "tile_x", "tile_y", "status", "events")
            )
        )


def record_size(h: int, w: int) -> int:
    return h * w * 3 + _META_DTYPE.itemsize


def file_size(t: int, h: int, w: int) -> int:
    return _HEADER.size + t * record_size(h, w)


def write_episode(path: str | Path, ep: EpisodeSample) -> None:
    t, h, w, _ = ep.frames.shape
    frame_bytes = h * w * 3
    body = np.empty((t, record_size(h, w)), dtype=np.uint8)
    body[:, :frame_bytes] = ep.frames.reshape(t, frame_bytes)
    meta = np.empty(t, dtype=_META_DTYPE)
    meta["action"] = ep.actions
    meta["tile_x"] = ep.tile_x
    meta["tile_y"] = ep.tile_y
    meta["status"] = ep.status
    meta["events"] = ep.events
    body[:, frame_bytes:] = meta.view(np.uint8).reshape(t, _META_DTYPE.itemsize)
    header = _HEADER.pack(MAGIC, VERSION, t, h, w, ep.level_seed, ep.p_random)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(header)
        f.write(body.tobytes())
    tmp.replace(path)


def read_episode(path: str | Path) -> EpisodeSample:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, t, h, w, level_seed, p_random = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = file_size(t, h, w)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    frame_bytes = h * w * 3
    body = np.frombuffer(raw, dtype=np.uint8, offset=_HEADER.size)
    body = body.reshape(t, record_size(h, w))
    frames = body[:, :frame_bytes].reshape(t, h, w, 3).copy()
    meta = np.ascontiguousarray(body[:, frame_bytes:]).view(_META_DTYPE).reshape(t)
    return EpisodeSample(
        frames=frames,
        actions=meta["action"].copy(),
        tile_x=meta["tile_x"].copy(),
        tile_y=meta["tile_y"].copy(),
        status=meta["status"].copy(),
        events=meta["events"].copy(),
        level_seed=level_seed,
        p_random=p_random,
    )
