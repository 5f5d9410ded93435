"""Model and training configs with desk and paper profiles."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class VaeConfig:
    frame_px: int = 64
    base_channels: int = 32
    channel_multipliers: tuple[int, ...] = (1, 2, 4)
    resnet_blocks: int = 1
    latent_channels: int = 4
    kl_weight: float = 1e-6
    perceptual_weight: float = 1.0
    learning_rate: float = 1e-4
    batch_size: int = 8

    def __post_init__(self):
        if len(self.channel_multipliers) != 3:
            raise ValueError("channel_multipliers must list three stage widths")
        if self.frame_px % (1 << (len(self.channel_multipliers) - 1)) != 0:
            raise ValueError("frame_px must be divisible by the downsample factor")
        for m in self.channel_multipliers:
            if (self.base_channels * m) % 8 != 0:
                raise ValueError("stage widths must be multiples of 8")

    @property
    def latent_hw(self) -> int:
        return self.frame_px >> (len(self.channel_multipliers) - 1)


@dataclass(frozen=True)
class LdmConfig:
    dit_depth: int = 6
    hidden_size: int = 192
    heads: int = 6
    patch_size: int = 2
    sequence_length: int = 16
    action_embed_dim: int = 96
    k_embed_dim: int = 96
    action_count: int = 7
    z_channels: int = 32
    latent_channels: int = 4
    latent_hw: int = 16
    levels: int = 1000
    logsnr_max: float = 9.0
    logsnr_min: float = -9.0
    learning_rate: float = 1e-4
    batch_size: int = 8
    ddim_steps: int = 4

    def __post_init__(self):
        if self.hidden_size % self.heads != 0:
            raise ValueError("hidden_size must be divisible by heads")
        if self.sequence_length < 2:
            raise ValueError("sequence_length must be >= 2")
        if self.latent_hw % self.patch_size != 0:
            raise ValueError("latent_hw must be divisible by patch_size")


@dataclass(frozen=True)
class LongtailConfig:
    enabled: bool = True
    capacity: int = 4096
    p_max: float = 0.3
    window: int = 500

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0.0 <= self.p_max <= 1.0:
            raise ValueError("p_max must lie in [0, 1]")
        if self.window < 1:
            raise ValueError("window must be >= 1")


DESK_VAE = VaeConfig()

PAPER_VAE = VaeConfig(
    frame_px=128,
    base_channels=128,
    channel_multipliers=(1, 2, 4),
    resnet_blocks=2,
    latent_channels=4,
    kl_weight=1e-6,
    perceptual_weight=1.0,
    learning_rate=4.5e-6,
    batch_size=32,
)

DESK_LDM = LdmConfig()

PAPER_LDM = LdmConfig(
    dit_depth=12,
    hidden_size=384,
    heads=6,
    patch_size=2,
    sequence_length=36,
    action_embed_dim=192,
    k_embed_dim=192,
    z_channels=32,
    latent_hw=32,
    levels=1000,
    learning_rate=1e-4,
    batch_size=8,
    ddim_steps=4,
)

DESK_LONGTAIL = LongtailConfig()


def profile_vae(name: str) -> VaeConfig:
    return _pick(name, DESK_VAE, PAPER_VAE)


def profile_ldm(name: str) -> LdmConfig:
    return _pick(name, DESK_LDM, PAPER_LDM)


def _pick(name, desk, paper):
    if name == "desk":
        return desk
    if name == "paper":
        return paper
    raise ValueError(f"unknown profile {name!r} (expected desk or paper)")
