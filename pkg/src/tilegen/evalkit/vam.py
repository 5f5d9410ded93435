"""Valid action model: infers the action taken at a frame from its context.

A per-transition conv backbone (each position sees its frame, the next frame,
and their difference) feeds a spatial-temporal transformer; each window
position with full context on both sides gets an action distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .. import kvconfig
from ..datagen.collect import Dataset
from ..rng import mix
from ..worldmodel.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..worldmodel.vae import frames_to_tensor

_MASK63 = (1 << 63) - 1


@dataclass(frozen=True)
class VamConfig:
    frame_px: int = 64
    window: int = 32
    radius: int = 8
    conv_channels: tuple[int, ...] = (32, 64, 96)
    embed_dim: int = 128
    depth: int = 2
    heads: int = 4
    action_count: int = 7
    learning_rate: float = 3e-4
    batch_size: int = 8

    def __post_init__(self):
        if self.window < 2 * self.radius + 1:
            raise ValueError("window must cover the context radius on both sides")
        if len(self.conv_channels) != 3:
            raise ValueError("conv_channels must name 3 stages")
        if any(c % 8 for c in self.conv_channels):
            raise ValueError("conv_channels must be multiples of 8")
        if self.frame_px % 8:
            raise ValueError("frame_px must be divisible by 8")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must divide evenly into heads")

    @property
    def grid(self) -> int:
        return self.frame_px // 8

    @property
    def evaluable(self) -> tuple[int, int]:
        """Half-open position range within a full window that has context."""
        return self.radius, self.window - self.radius


DESK_VAM = VamConfig()
PAPER_VAM = VamConfig(
    frame_px=128,
    conv_channels=(64, 128, 256),
    embed_dim=384,
    heads=6,
    batch_size=32,
)


def profile_vam(name: str) -> VamConfig:
    profiles = {"desk": DESK_VAM, "paper": PAPER_VAM}
    if name not in profiles:
        raise ValueError(f"unknown profile {name!r}")
    return profiles[name]


class _Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, n, d = x.shape
        q, k, v = self.qkv(x).reshape(b, n, 3, self.heads, d // self.heads) \
            .permute(2, 0, 3, 1, 4)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, n, d))


class _StBlock(nn.Module):
    """Spatial attention within each frame, then temporal across positions."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.ln_s = nn.LayerNorm(dim)
        self.attn_s = _Attention(dim, heads)
        self.ln_t = nn.LayerNorm(dim)
        self.attn_t = _Attention(dim, heads)
        self.ln_m = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * 4), nn.SiLU(), nn.Linear(dim * 4, dim)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, n, d = x.shape
        h = self.attn_s(self.ln_s(x).reshape(b * t, n, d)).reshape(b, t, n, d)
        x = x + h
        h = self.ln_t(x).transpose(1, 2).reshape(b * n, t, d)
        h = self.attn_t(h).reshape(b, n, t, d).transpose(1, 2)
        x = x + h
        return x + self.mlp(self.ln_m(x))


class Vam(nn.Module):
    def __init__(self, cfg: VamConfig):
        super().__init__()
        self.cfg = cfg
        c0, c1, c2 = cfg.conv_channels
        self.stem = nn.Sequential(
            nn.Conv2d(15, c0, 3, stride=2, padding=1),
            nn.GroupNorm(8, c0), nn.SiLU(),
            nn.Conv2d(c0, c1, 3, stride=2, padding=1),
            nn.GroupNorm(8, c1), nn.SiLU(),
            nn.Conv2d(c1, c2, 3, stride=2, padding=1),
            nn.GroupNorm(8, c2), nn.SiLU(),
        )
        self.proj = nn.Linear(c2, cfg.embed_dim)
        tokens = cfg.grid * cfg.grid
        self.pos_spatial = nn.Parameter(torch.zeros(1, 1, tokens, cfg.embed_dim))
        self.pos_temporal = nn.Parameter(torch.zeros(1, cfg.window, 1, cfg.embed_dim))
        self.blocks = nn.ModuleList(
            _StBlock(cfg.embed_dim, cfg.heads) for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(cfg.embed_dim)
        self.head = nn.Linear(cfg.embed_dim * 2, cfg.action_count)
        self.apply(self._init)
        nn.init.trunc_normal_(self.pos_spatial, std=0.02)
        nn.init.trunc_normal_(self.pos_temporal, std=0.02)

    @staticmethod
    def _init(module: nn.Module):
        if isinstance(module, (nn.Linear, nn.Conv2d)):
            nn.init.trunc_normal_(module.weight, std=0.02)
            if module.bias is not None:
                nn.init.zeros_(module.bias)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        """(B, T, 3, H, W) in [-1, 1] -> per-position logits (B, T, actions)."""
        if frames.ndim != 5 or frames.shape[2] != 3:
            raise ValueError(f"expected (B,T,3,H,W) frames, got {tuple(frames.shape)}")
        b, t = frames.shape[:2]
        if not 1 <= t <= self.cfg.window:
            raise ValueError(f"window length {t} outside [1, {self.cfg.window}]")
        if frames.shape[-2:] != (self.cfg.frame_px, self.cfg.frame_px):
            raise ValueError(f"expected {self.cfg.frame_px}px frames")
        # the action at position t drives the t -> t+1 transition, and the
        # airborne gravity choice only shows in the second difference of
        # position, so each position's conv input stacks the previous, current
        # and next frames plus both adjacent differences (edge positions
        # self-pad; they are never targets)
        prv = torch.cat([frames[:, :1], frames[:, :-1]], dim=1)
        nxt = torch.cat([frames[:, 1:], frames[:, -1:]], dim=1)
        stacked = torch.cat(
            [prv, frames, nxt, frames - prv, nxt - frames], dim=2
        )
        feat = self.stem(stacked.reshape(b * t, 15, *frames.shape[-2:]))
        feat = feat.flatten(2).transpose(1, 2)
        x = self.proj(feat).reshape(b, t, -1, self.cfg.embed_dim)
        x = x + self.pos_spatial + self.pos_temporal[:, :t]
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        # the player occupies a few tokens, so mean pooling alone dilutes the
        # motion evidence; max pooling keeps the strongest token's features
        pooled = torch.cat([x.mean(dim=2), x.amax(dim=2)], dim=-1)
        return self.head(pooled)


def vam_predict(model: Vam, frames: np.ndarray, target: int) -> np.ndarray:
    """Action distribution for one window position with full 2r context."""
    cfg = model.cfg
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise ValueError(f"expected (T,H,W,3) frames, got {frames.shape}")
    t = frames.shape[0]
    if not cfg.radius <= target <= t - cfg.radius - 1:
        raise ValueError(
            f"target {target} lacks {cfg.radius}-frame context in window of {t}"
        )
    with torch.no_grad():
        logits = model(frames_to_tensor(frames).unsqueeze(0))
        probs = torch.softmax(logits[0, target], dim=-1)
    return probs.numpy().astype(np.float64)


class _EpisodeSource:
    """Uniform (frames, actions) episode access over arrays or a dataset."""

    def __init__(self, data):
        if isinstance(data, tuple):
            frames, actions = data
            frames = np.asarray(frames)
            actions = np.asarray(actions)
            if frames.ndim != 5 or frames.shape[-1] != 3:
                raise ValueError(f"expected (E,T,H,W,3) frames, got {frames.shape}")
            if actions.shape != frames.shape[:2]:
                raise ValueError("actions must be (E,T) matching frames")
            self._frames, self._actions, self._ds = frames, actions, None
            self.episodes, self.timesteps = frames.shape[:2]
        else:
            ds = data if isinstance(data, Dataset) else Dataset(data)
            self._ds = ds
            self._maps: dict[int, np.ndarray] = {}
            self._acts: dict[int, np.ndarray] = {}
            self.episodes, self.timesteps = ds.episodes, ds.timesteps
        if self.episodes == 0 or self.timesteps == 0:
            raise ValueError("empty dataset")

    def window(self, ep: int, start: int, length: int) -> tuple[np.ndarray, np.ndarray]:
        if self._ds is None:
            return (
                self._frames[ep, start:start + length],
                self._actions[ep, start:start + length],
            )
        mm = self._maps.get(ep)
        if mm is None:
            mm = self._ds.frames_memmap(ep)
            self._maps[ep] = mm
            self._acts[ep] = self._ds.actions(ep)
        return np.asarray(mm[start:start + length]), self._acts[ep][start:start + length]


@dataclass
class VamTrainResult:
    model: Vam
    losses: list[dict] = field(default_factory=list)
    holdout_accuracy: float = float("nan")


def vam_window_probs(model: Vam, frames: np.ndarray, batch: int = 8) -> np.ndarray:
    """Distributions for every frame with full context in a long sequence.

    Covers targets j in [radius, len-radius-1] with stride-(window-2r) windows;
    overlapping coverage keeps the first window's answer. Returns (n, actions)
    aligned so row 0 is target j=radius.
    """
    cfg = model.cfg
    frames = np.asarray(frames)
    n = frames.shape[0]
    if n < cfg.window:
        raise ValueError(f"need at least {cfg.window} frames, got {n}")
    starts = list(range(0, n - cfg.window + 1, cfg.window - 2 * cfg.radius))
    if starts[-1] != n - cfg.window:
        starts.append(n - cfg.window)
    lo, hi = cfg.evaluable
    out = np.full((n - 2 * cfg.radius, cfg.action_count), np.nan)
    with torch.no_grad():
        for i in range(0, len(starts), batch):
            chunk = starts[i:i + batch]
            windows = np.stack([frames[s:s + cfg.window] for s in chunk])
            x = frames_to_tensor(windows.reshape(-1, *windows.shape[2:]))
            x = x.reshape(len(chunk), cfg.window, 3, cfg.frame_px, cfg.frame_px)
            probs = torch.softmax(model(x), dim=-1).numpy()
            for row, s in enumerate(chunk):
                for j in range(lo, hi):
                    slot = s + j - cfg.radius
                    if np.isnan(out[slot, 0]):
                        out[slot] = probs[row, j]
    return out


def vam_accuracy(model: Vam, source, episode_ids) -> float:
    """Argmax accuracy over all full-context targets of the given episodes."""
    cfg = model.cfg
    hits = total = 0
    for ep in episode_ids:
        frames, actions = source.window(ep, 0, source.timesteps)
        if frames.shape[0] < cfg.window:
            continue
        probs = vam_window_probs(model, frames)
        refs = actions[cfg.radius:frames.shape[0] - cfg.radius]
        hits += int(np.sum(np.argmax(probs, axis=1) == refs))
        total += refs.shape[0]
    if total == 0:
        raise ValueError("no evaluable targets in holdout episodes")
    return hits / total


def train_vam(
    data,
    cfg: VamConfig,
    steps: int,
    seed: int,
    out=None,
    holdout_fraction: float = 0.1,
) -> VamTrainResult:
    source = _EpisodeSource(data)
    if source.timesteps < cfg.window:
        raise ValueError(
            f"episodes of {source.timesteps} frames are shorter than the "
            f"{cfg.window}-frame window"
        )
    holdout = min(max(1, round(source.episodes * holdout_fraction)),
                  source.episodes - 1) if source.episodes > 1 else 0
    train_eps = source.episodes - holdout

    torch.manual_seed(mix(seed, 0xAA7) & _MASK63)
    model = Vam(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=steps, eta_min=cfg.learning_rate * 0.1
    )
    lo, hi = cfg.evaluable
    starts = source.timesteps - cfg.window + 1
    rows: list[dict] = []
    for step in range(steps):
        rng = np.random.default_rng(mix(seed, step, 0x7A) & _MASK63)
        eps = rng.integers(0, train_eps, cfg.batch_size)
        offs = rng.integers(0, starts, cfg.batch_size)
        frames = []
        actions = []
        for ep, off in zip(eps, offs):
            f, a = source.window(int(ep), int(off), cfg.window)
            frames.append(f)
            actions.append(a[lo:hi])
        x = frames_to_tensor(np.stack(frames).reshape(-1, cfg.frame_px, cfg.frame_px, 3))
        x = x.reshape(cfg.batch_size, cfg.window, 3, cfg.frame_px, cfg.frame_px)
        target = torch.from_numpy(np.stack(actions).astype(np.int64))
        logits = model(x)[:, lo:hi]
        loss = F.cross_entropy(logits.reshape(-1, cfg.action_count), target.reshape(-1))
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        rows.append({"step": step, "loss": float(loss.detach())})

    model.eval()
    if holdout:
        acc = vam_accuracy(model, source, range(train_eps, source.episodes))
    else:
        acc = float("nan")
    if out is not None:
        save_vam(out, model, step=steps, extra={"holdout_accuracy": acc})
    return VamTrainResult(model=model, losses=rows, holdout_accuracy=acc)


@dataclass
class LoadedVam:
    model: Vam
    cfg: VamConfig
    step: int
    extra: dict


def save_vam(path, model: Vam, step: int = 0, extra: dict | None = None):
    tensors = {name: p.detach().numpy() for name, p in model.state_dict().items()}
    save_checkpoint(path, "vam", kvconfig.to_mapping(model.cfg), tensors,
                    step=step, extra=extra)


def load_vam(path) -> LoadedVam:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "vam":
        raise CheckpointError(f"expected a vam checkpoint, got {ckpt.kind!r}")
    cfg = kvconfig.from_mapping(VamConfig, ckpt.config)
    model = Vam(cfg)
    state = {k: torch.from_numpy(v.copy()) for k, v in ckpt.tensors.items()}
    try:
        model.load_state_dict(state)
    except RuntimeError as err:
        raise CheckpointError(f"checkpoint does not match model: {err}") from err
    model.eval()
    return LoadedVam(model=model, cfg=cfg, step=ckpt.step, extra=ckpt.extra)
