"""DDIM ladder sampling and autoregressive frame rollout."""

from __future__ import annotations

import numpy as np
import torch

from tilegen.rng import mix
from tilegen.tilequest.engine import Action
from tilegen.worldmodel.dit import Dit
from tilegen.worldmodel.schedule import NoiseSchedule
from tilegen.worldmodel.vae import Vae, frames_to_tensor, tensor_to_frames

_MASK63 = (1 << 63) - 1


def ddim_ladder(levels: int, steps: int) -> list[int]:
    """Descending level ladder k_i = round(levels*i/steps), i = steps..1, then 0."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ladder = [round(levels * i / steps) for i in range(steps, 0, -1)]
    ladder.append(0)
    return ladder


@torch.no_grad()
def ddim_next(
    model: Dit,
    schedule: NoiseSchedule,
    z: torch.Tensor,
    action: int,
    steps: int,
    gen: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Denoise one frame; z advances only on the final rung."""
    cfg = model.cfg
    b = z.shape[0]
    x = torch.randn(b, cfg.latent_channels, cfg.latent_hw, cfg.latent_hw, generator=gen)
    ladder = ddim_ladder(schedule.levels, steps)
    z_next = z
    for i in range(len(ladder) - 1):
        k = ladder[i]
        z_out, v = model(z, x, action, k)
        x0_pred, eps_pred = schedule.recover(x, v, k)
        alpha, sigma = schedule.alpha_sigma(ladder[i + 1])
        x = alpha * x0_pred + sigma * eps_pred
        z_next = z_out
    return x, z_next


@torch.no_grad()
def prime_hidden(model: Dit, vae: Vae, frame: np.ndarray, latent_scale: float) -> torch.Tensor:
    """Fold the clean first-frame latent into a zero hidden state at level 0."""
    x1 = vae.encode(frames_to_tensor(frame)) * latent_scale
    z = torch.zeros(1, model.cfg.z_channels, model.cfg.latent_hw, model.cfg.latent_hw)
    z, _ = model(z, x1, int(Action.Noop), 0)
    return z


@torch.no_grad()
def rollout(
    model: Dit,
    vae: Vae,
    schedule: NoiseSchedule,
    first_frame: np.ndarray,
    actions,
    steps: int,
    seed: int,
    latent_scale: float,
) -> np.ndarray:
    """Generate one frame per action, conditioned on the first real frame."""
    actions = list(actions)
    if not actions:
        raise ValueError("need at least one action")
    z = prime_hidden(model, vae, first_frame, latent_scale)
    gen = torch.Generator()
    gen.manual_seed(mix(seed, 0xD1F) & _MASK63)
    frames = []
    for action in actions:
        x, z = ddim_next(model, schedule, z, int(action), steps, gen)
        decoded = vae.decode(x / latent_scale)
        frames.append(tensor_to_frames(decoded)[0])
    return np.stack(frames)
