"""Deterministic side-scrolling tile platformer used as the data source."""

from .tiles import Tile, TileMap, gen_level, reachable_tiles, spawnable
from .engine import (
    Action,
    Status,
    Event,
    GameState,
    ExtraInfo,
    reset,
    step,
    snapshot,
    TILE_UNITS,
    PLAYER_W,
    PLAYER_H,
)
from .render import Frame, render, render_array, frame_size

__all__ = [
    "Tile",
    "TileMap",
    "gen_level",
    "reachable_tiles",
    "spawnable",
    "Action",
    "Status",
    "Event",
    "GameState",
    "ExtraInfo",
    "reset",
    "step",
    "snapshot",
    "TILE_UNITS",
    "PLAYER_W",
    "PLAYER_H",
    "Frame",
    "render",
    "render_array",
    "frame_size",
]
