"""Dataset collection and reading.

A dataset directory holds numbered episode files plus a manifest.json that is
written last, so its presence marks a complete dataset. Collection is
deterministic in (seed, level_seed, width, p_random, preferred_weight) and
resumable: episode files already present with the right size are kept.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..rng import Rng, mix
from ..tilequest.engine import Status, reset, snapshot, step
from ..tilequest.render import render_array
from ..tilequest.tiles import TileMap, gen_level, spawnable
from .agents import RandomPolicy, expert_action
from .episodes import EpisodeSample, FormatError, file_size, read_episode, write_episode

ACTION_COUNT = 7
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class CollectConfig:
    episodes: int
    timesteps: int
    seed: int
    level_seed: int
    width: int = 32
    p_random: float = 0.5
    preferred_weight: float = 1.0
    tile_px: int = 8
    repeat_max: int = 4


def episode_filename(i: int) -> str:
    return f"ep_{i:05d}.pgep"


def collect_episode(m: TileMap, timesteps: int, ep_seed: int, p_random: float,
                    preferred_weight: float = 1.0, tile_px: int = 8,
                    level_seed: int = 0, repeat_max: int = 4) -> EpisodeSample:
    """Roll one episode from a random spawn with a random starting status,
    mixing the expert and the random policy per step."""
    rng = Rng(ep_seed)
    cells = spawnable(m)
    spawn = cells[rng.below(len(cells))]
    state = reset(m, rng.next_u64(), spawn=spawn)
    if rng.chance(0.5):
        state = dataclasses.replace(state, status=Status.Powered)
    policy = RandomPolicy(preferred_weight=preferred_weight, repeat_max=repeat_max)

    t = timesteps
    hpx = wpx = 8 * tile_px
    frames = np.empty((t, hpx, wpx, 3), dtype=np.uint8)
    actions = np.empty(t, dtype=np.uint8)
    tile_x = np.empty(t, dtype=np.uint16)
    tile_y = np.empty(t, dtype=np.uint16)
    status = np.empty(t, dtype=np.uint8)
    events = np.empty(t, dtype=np.uint8)

    prev_events = 0
    for i in range(t):
        frames[i] = render_array(state, m, tile_px)
        info = snapshot(state)
        tile_x[i], tile_y[i] = info.tile_x, info.tile_y
        status[i] = int(info.status)
        events[i] = prev_events
        if rng.chance(p_random):
            a = policy.sample(rng)
        else:
            a = expert_action(state, m, rng)
        actions[i] = int(a)
        state, step_info = step(state, m, a)
        prev_events = int(step_info.events)

    return EpisodeSample(
        frames=frames, actions=actions, tile_x=tile_x, tile_y=tile_y,
        status=status, events=events, level_seed=level_seed, p_random=p_random,
    )


def collect_dataset(out_dir: str | Path, cfg: CollectConfig,
                    progress: bool = False) -> "Dataset":
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = gen_level(cfg.level_seed, cfg.width)
    hpx = wpx = 8 * cfg.tile_px
    expected = file_size(cfg.timesteps, hpx, wpx)

    for i in range(cfg.episodes):
        path = out / episode_filename(i)
        if path.exists() and path.stat().st_size == expected:
            continue
        ep = collect_episode(
            m, cfg.timesteps, mix(cfg.seed, i), cfg.p_random,
            cfg.preferred_weight, cfg.tile_px, level_seed=cfg.level_seed,
            repeat_max=cfg.repeat_max)
        write_episode(path, ep)
        if progress and (i + 1) % 50 == 0:
            print(f"collected {i + 1}/{cfg.episodes} episodes")

    manifest = {
        "format_version": 1,
        "frame_w": wpx,
        "frame_h": hpx,
        "action_count": ACTION_COUNT,
        "episodes": cfg.episodes,
        "timesteps": cfg.timesteps,
        "seed": cfg.seed,
        "p_random": cfg.p_random,
        "level": {"seed": cfg.level_seed, "width": cfg.width},
    }
    tmp = out / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    tmp.replace(out / MANIFEST)
    return Dataset(out)


class Dataset:
    """Reader for a collected dataset directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        mf = self.root / MANIFEST
        if not mf.exists():
            raise FormatError(f"{self.root}: missing {MANIFEST} (incomplete dataset)")
        self.manifest = json.loads(mf.read_text())
        if self.manifest.get("format_version") != 1:
            raise FormatError(f"{self.root}: unsupported manifest format_version")
        self.episodes = int(self.manifest["episodes"])
        self.timesteps = int(self.manifest["timesteps"])
        self.frame_h = int(self.manifest["frame_h"])
        self.frame_w = int(self.manifest["frame_w"])

    def path(self, i: int) -> Path:
        return self.root / episode_filename(i)

    def __len__(self) -> int:
        return self.episodes

    def load(self, i: int) -> EpisodeSample:
        return read_episode(self.path(i))

    def frames_memmap(self, i: int) -> np.ndarray:
        """Zero-copy view of episode i's frames as (T, H, W, 3) uint8. Rows
        materialize only when indexed, which keeps giant datasets out of RAM."""
        from .episodes import _HEADER, record_size

        rec = record_size(self.frame_h, self.frame_w)
        mm = np.memmap(self.path(i), dtype=np.uint8, mode="r",
                       offset=_HEADER.size, shape=(self.timesteps, rec))
        h, w = self.frame_h, self.frame_w
        # Each record is frame bytes then packed meta, so a strided view can
        # expose just the frames without copying.
        return np.lib.stride_tricks.as_strided(
            mm, shape=(self.timesteps, h, w, 3), strides=(rec, w * 3, 3, 1))

    def actions(self, i: int) -> np.ndarray:
        return self.load(i).actions

    def level(self) -> TileMap:
        lv = self.manifest["level"]
        return gen_level(int(lv["seed"]), int(lv["width"]))
