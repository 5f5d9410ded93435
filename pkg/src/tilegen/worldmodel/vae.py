"""Frame VAE: moderate encoder, light decoder sized for real-time decode."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from tilegen import kvconfig
from tilegen.worldmodel.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from tilegen.worldmodel.config import VaeConfig

_PERC_SEED = 0x7E4C0DE


def frames_to_tensor(frames: np.ndarray) -> torch.Tensor:
    """uint8 (B,H,W,3) or (H,W,3) -> float32 (B,3,H,W) in [-1, 1]."""
    arr = np.asarray(frames)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"expected (B,H,W,3) frames, got {arr.shape}")
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float32))
    return t.permute(0, 3, 1, 2) / 127.5 - 1.0


def tensor_to_frames(t: torch.Tensor) -> np.ndarray:
    """float (B,3,H,W) in [-1, 1] -> uint8 (B,H,W,3)."""
    if t.dim() != 4 or t.shape[1] != 3:
        raise ValueError(f"expected (B,3,H,W) tensor, got {tuple(t.shape)}")
    x = ((t.detach().clamp(-1.0, 1.0) + 1.0) * 127.5).round().to(torch.uint8)
    return x.permute(0, 2, 3, 1).contiguous().numpy()


class _ResBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, ch)
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.norm2 = nn.GroupNorm(8, ch)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class _Encoder(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        chans = [cfg.base_channels * m for m in cfg.channel_multipliers]
        layers: list[nn.Module] = [nn.Conv2d(3, chans[0], 3, padding=1)]
        for i, ch in enumerate(chans):
            if i > 0:
                layers.append(nn.Conv2d(chans[i - 1], ch, 3, stride=2, padding=1))
            layers.extend(_ResBlock(ch) for _ in range(cfg.resnet_blocks))
        layers.extend(
            [
                nn.GroupNorm(8, chans[-1]),
                nn.SiLU(),
                nn.Conv2d(chans[-1], 2 * cfg.latent_channels, 3, padding=1),
            ]
        )
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class _Decoder(nn.Module):
    """Encoder-mirrored widths with pixel-shuffle upsamples."""

    def __init__(self, cfg: VaeConfig):
        super().__init__()
        chans = [cfg.base_channels * m for m in reversed(cfg.channel_multipliers)]
        layers: list[nn.Module] = [nn.Conv2d(cfg.latent_channels, chans[0], 3, padding=1)]
        for i, ch in enumerate(chans):
            if i > 0:
                layers.extend(
                    [nn.Conv2d(chans[i - 1], ch * 4, 3, padding=1), nn.PixelShuffle(2)]
                )
            layers.extend(_ResBlock(ch) for _ in range(cfg.resnet_blocks))
        layers.extend(
            [
                nn.GroupNorm(8, chans[-1]),
                nn.SiLU(),
                nn.Conv2d(chans[-1], 3, 3, padding=1),
            ]
        )
        self.net = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(z)


class Vae(nn.Module):
    def __init__(self, cfg: VaeConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = _Encoder(cfg)
        self.decoder = _Decoder(cfg)

    def _check_frames(self, x: torch.Tensor):
        want = (3, self.cfg.frame_px, self.cfg.frame_px)
        if x.dim() != 4 or x.shape[1:] != want:
            raise ValueError(f"expected (B,{want[0]},{want[1]},{want[2]}) frames, got {tuple(x.shape)}")

    def encode_params(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        self._check_frames(x)
        mu, logvar = self.encoder(x).chunk(2, dim=1)
        return mu, logvar.clamp(-30.0, 20.0)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        mu, _ = self.encode_params(x)
        return mu

    def decode(self, z: torch.Tensor, clamp: bool = True) -> torch.Tensor:
        want = (self.cfg.latent_channels, self.cfg.latent_hw, self.cfg.latent_hw)
        if z.dim() != 4 or z.shape[1:] != want:
            raise ValueError(f"expected (B,{want[0]},{want[1]},{want[2]}) latents, got {tuple(z.shape)}")
        x = self.decoder(z)
        return x.clamp(-1.0, 1.0) if clamp else x


class PerceptualPyramid(nn.Module):
    """Frozen random conv features; L2 feature distance as an LPIPS stand-in."""

    def __init__(self):
        super().__init__()
        gen = torch.Generator().manual_seed(_PERC_SEED)
        specs = [(3, 16), (16, 32), (32, 64)]
        weights = []
        for cin, cout in specs:
            w = torch.randn(cout, cin, 3, 3, generator=gen) * (2.0 / (cin * 9)) ** 0.5
            weights.append(w)
        for i, w in enumerate(weights):
            self.register_buffer(f"w{i}", w)
        self._count = len(weights)

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        out = []
        h = x
        for i in range(self._count):
            h = F.silu(F.conv2d(h, getattr(self, f"w{i}"), stride=2, padding=1))
            out.append(h)
        return out

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        total = torch.zeros((), dtype=a.dtype)
        for fa, fb in zip(self.features(a), self.features(b)):
            total = total + F.mse_loss(fa, fb)
        return total / self._count


@dataclass
class LoadedVae:
    model: Vae
    cfg: VaeConfig
    step: int
    extra: dict


def save_vae(path: str | Path, model: Vae, step: int = 0, extra: dict | None = None) -> None:
    tensors = {
        name: value.detach().cpu().numpy() for name, value in model.state_dict().items()
    }
    save_checkpoint(
        path,
        kind="vae",
        config=kvconfig.to_mapping(model.cfg),
        tensors=tensors,
        step=step,
        extra=extra,
    )


def load_vae(path: str | Path) -> LoadedVae:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "vae":
        raise CheckpointError(f"{path}: expected a vae checkpoint, got {ckpt.kind!r}")
    cfg = kvconfig.from_mapping(VaeConfig, ckpt.config)
    model = Vae(cfg)
    try:
        model.load_state_dict(
            {name: torch.from_numpy(value) for name, value in ckpt.tensors.items()},
            strict=True,
        )
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter mismatch: {exc}") from exc
    model.eval()
    return LoadedVae(model=model, cfg=cfg, step=ckpt.step, extra=ckpt.extra)
