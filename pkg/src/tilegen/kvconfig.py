"""Flat key=value config files mapped onto frozen dataclasses."""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path


def parse_kv(text: str) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _convert(raw: str, typ):
    origin = typing.get_origin(typ)
    if origin is tuple:
        item = typing.get_args(typ)[0]
        parts = [p.strip() for p in raw.split(",")]
        return tuple(_convert(p, item) for p in parts if p)
    if typ is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is str:
        return raw
    raise TypeError(f"unsupported config field type: {typ}")


def from_mapping(cls, mapping: dict[str, str] | dict[str, object]):
    """Build dataclass cls from a mapping; unknown keys are rejected."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in mapping.items():
        typ = hints[key]
        if isinstance(value, str):
            kwargs[key] = _convert(value, typ)
        elif typing.get_origin(typ) is tuple:
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = typ(value) if typ in (int, float, bool, str) else value
    return cls(**kwargs)


def from_text(cls, text: str):
    return from_mapping(cls, parse_kv(text))


def from_file(cls, path: str | Path):
    return from_text(cls, Path(path).read_text(encoding="utf-8"))


def to_mapping(cfg) -> dict[str, object]:
    """Dataclass to a JSON-friendly dict (tuples become lists)."""
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def to_text(cfg) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            rendered = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        else:
            rendered = str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def to_file(cfg, path: str | Path) -> None:
    Path(path).write_text(to_text(cfg), encoding="utf-8")
