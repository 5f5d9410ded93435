"""Episode feature vectors: a coarse position-visit histogram plus event rates.

With grid G the feature is G*G position bins (row-major by bin row, then bin
column, normalized to sum 1 over the episode) followed by 4 per-step event
rates in flag order: PowerUpConsumed, Died, ReachedGoal, CoinCollected.
"""

from __future__ import annotations

import numpy as np

from ..datagen.episodes import EpisodeSample
from ..tilequest.engine import EVENT_ORDER
from ..tilequest.tiles import TileMap, reachable_tiles

EVENT_DIM = len(EVENT_ORDER)


def feature_dim(grid: int) -> int:
    return grid * grid + EVENT_DIM


def _bin_index(tile: np.ndarray, extent: int, grid: int) -> np.ndarray:
    idx = (tile.astype(np.int64) * grid) // max(extent, 1)
    return np.clip(idx, 0, grid - 1)


def featurize(ep: EpisodeSample, grid: int, map_width: int, map_height: int) -> np.ndarray:
    t = ep.timesteps
    bx = _bin_index(ep.tile_x, map_width, grid)
    by = _bin_index(ep.tile_y, map_height, grid)
    hist = np.bincount(by * grid + bx, minlength=grid * grid).astype(np.float64)
    hist /= t
    rates = np.empty(EVENT_DIM, dtype=np.float64)
    ev = ep.events.astype(np.int64)
    for i, flag in enumerate(EVENT_ORDER):
        rates[i] = float(((ev & int(flag)) != 0).sum()) / t
    return np.concatenate([hist, rates])


def aggregate_features(features: np.ndarray) -> np.ndarray:
    """Mean feature over a dataset: the distribution the balancer steers."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError("expected an (n, d) feature matrix")
    return features.mean(axis=0)


def target_distribution(m: TileMap, grid: int,
                        event_mass: float = 0.01) -> np.ndarray:
    """Balanced target: uniform mass over position bins that contain at least
    one reachable tile (others get zero), plus a small constant target for
    each event rate so rare-event episodes keep weight."""
    reach = reachable_tiles(m)
    bins = set()
    for (x, y) in reach:
        bx = min((x * grid) // m.width, grid - 1)
        by = min((y * grid) // m.height, grid - 1)
        bins.add(by * grid + bx)
    y_vec = np.zeros(feature_dim(grid), dtype=np.float64)
    if bins:
        for b in bins:
            y_vec[b] = 1.0 / len(bins)
    y_vec[grid * grid:] = event_mass
    return y_vec
