"""Frame rendering. The camera shows an 8x8-tile window that follows the
player horizontally; at the default 8 px per tile a frame is 64x64 RGB.

The static level background is rasterized once per (map, tile size) and
cached, so per-frame work is a crop, a few overdraws for collected tiles, and
the player sprite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import GameState, Status, PLAYER_W, PLAYER_H, TILE_UNITS
from .tiles import Tile, TileMap

VIEW_TILES = 8
DEFAULT_TILE_PX = 8

SKY = (135, 206, 235)
SOLID_FILL = (139, 90, 43)
SOLID_EDGE = (101, 67, 33)
PIPE_FILL = (46, 160, 67)
PIPE_EDGE = (22, 92, 38)
COIN = (255, 213, 0)
POWER_FILL = (214, 45, 66)
POWER_DOT = (255, 255, 255)
HAZARD = (180, 30, 30)
GOAL_POLE = (220, 220, 220)
GOAL_FLAG = (60, 200, 80)
PLAYER_SMALL = (255, 140, 0)
PLAYER_POWERED = (235, 60, 235)
PLAYER_TRIM = (40, 40, 40)


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    rgb: bytes


def frame_size(tile_px: int = DEFAULT_TILE_PX) -> int:
    return VIEW_TILES * tile_px


def _draw_tile(img: np.ndarray, x0: int, y0: int, t: Tile, px: int) -> None:
    s = px // 8  # sprite art is authored on an 8 px grid
    if t == Tile.Solid:
        img[y0:y0 + px, x0:x0 + px] = SOLID_FILL
        img[y0:y0 + s, x0:x0 + px] = SOLID_EDGE
    elif t == Tile.Pipe:
        img[y0:y0 + px, x0:x0 + px] = PIPE_FILL
        img[y0:y0 + px, x0:x0 + s] = PIPE_EDGE
        img[y0:y0 + px, x0 + px - s:x0 + px] = PIPE_EDGE
    elif t == Tile.Coin:
        img[y0 + 2 * s:y0 + 6 * s, x0 + 2 * s:x0 + 6 * s] = COIN
    elif t == Tile.PowerUp:
        img[y0 + s:y0 + 7 * s, x0 + s:x0 + 7 * s] = POWER_FILL
        img[y0 + 3 * s:y0 + 5 * s, x0 + 3 * s:x0 + 5 * s] = POWER_DOT
    elif t == Tile.Hazard:
        img[y0 + 4 * s:y0 + 8 * s, x0:x0 + px] = HAZARD
        img[y0 + 2 * s:y0 + 4 * s, x0 + 2 * s:x0 + 6 * s] = HAZARD
    elif t == Tile.Goal:
        top = max(y0 - px, 0)
        img[top:y0 + px, x0 + 3 * s:x0 + 4 * s] = GOAL_POLE
        img[top:top + 3 * s, x0 + 4 * s:x0 + 8 * s] = GOAL_FLAG


_BG_CACHE: dict[tuple[TileMap, int], np.ndarray] = {}


def _background(m: TileMap, tile_px: int) -> np.ndarray:
    key = (m, tile_px)
    bg = _BG_CACHE.get(key)
    if bg is not None:
        return bg
    img = np.empty((m.height * tile_px, m.width * tile_px, 3), dtype=np.uint8)
    img[:] = SKY
    for y in range(m.height):
        for x in range(m.width):
            t = m.at(x, y)
            if t != Tile.Empty:
                _draw_tile(img, x * tile_px, y * tile_px, t, tile_px)
    if len(_BG_CACHE) > 8:
        _BG_CACHE.clear()
    _BG_CACHE[key] = img
    return img


def _units_to_px(u: int, tile_px: int) -> int:
    return (u * tile_px) // TILE_UNITS


def render_array(state: GameState, m: TileMap,
                 tile_px: int = DEFAULT_TILE_PX) -> np.ndarray:
    """Render to an (H, W, 3) uint8 array. The hot path for data collection."""
    view_px = VIEW_TILES * tile_px
    bg = _background(m, tile_px)
    cx_px = _units_to_px(state.pos[0] + PLAYER_W // 2, tile_px)
    cam = min(max(cx_px - view_px // 2, 0), m.width * tile_px - view_px)
    img = bg[:, cam:cam + view_px].copy()

    sky = np.array(SKY, dtype=np.uint8)
    for (tx, ty) in state.collected:
        x0 = tx * tile_px - cam
        if -tile_px < x0 < view_px:
            img[ty * tile_px:(ty + 1) * tile_px,
                max(x0, 0):min(x0 + tile_px, view_px)] = sky

    s = tile_px // 8
    w = _units_to_px(PLAYER_W, tile_px)
    h = _units_to_px(PLAYER_H, tile_px)
    if state.status == Status.Powered:
        color, extra = PLAYER_POWERED, 2 * s
    else:
        color, extra = PLAYER_SMALL, 0
    if state.crouching:
        h = h // 2
        extra = extra // 2
    px = _units_to_px(state.pos[0], tile_px) - cam
    py = _units_to_px(state.pos[1] + PLAYER_H, tile_px) - h  # feet-aligned
    y0, y1 = max(py - extra, 0), min(py + h, view_px)
    x0, x1 = max(px, 0), min(px + w, view_px)
    if x1 > x0 and y1 > y0:
        img[y0:y1, x0:x1] = color
        ty0 = max(py - extra + s, 0)
        if ty0 + s <= view_px and x1 > x0:
            img[ty0:ty0 + s, x0:x1] = PLAYER_TRIM
    return img


def render(state: GameState, m: TileMap, tile_px: int = DEFAULT_TILE_PX) -> Frame:
    """Render the current view to an RGB frame."""
    img = render_array(state, m, tile_px)
    return Frame(width=img.shape[1], height=img.shape[0], rgb=img.tobytes())
