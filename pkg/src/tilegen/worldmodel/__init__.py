"""Latent world model: VAE, recurrent DiT denoiser, training, sampling."""

from tilegen.worldmodel.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from tilegen.worldmodel.config import LdmConfig, LongtailConfig, VaeConfig
from tilegen.worldmodel.dit import Dit, dit_step, load_ldm, save_ldm
from tilegen.worldmodel.replay import LongtailQueue, longtail_probability
from tilegen.worldmodel.sampler import ddim_ladder, ddim_next, rollout
from tilegen.worldmodel.schedule import NoiseSchedule
from tilegen.worldmodel.training import (
    encode_dataset,
    ldm_train_step,
    train_ldm,
    train_vae,
)
from tilegen.worldmodel.vae import Vae, frames_to_tensor, load_vae, save_vae, tensor_to_frames

__all__ = [
    "CheckpointError",
    "Dit",
    "LdmConfig",
    "LongtailConfig",
    "LongtailQueue",
    "NoiseSchedule",
    "Vae",
    "VaeConfig",
    "ddim_ladder",
    "ddim_next",
    "dit_step",
    "encode_dataset",
    "frames_to_tensor",
    "ldm_train_step",
    "load_checkpoint",
    "load_ldm",
    "load_vae",
    "longtail_probability",
    "rollout",
    "save_checkpoint",
    "save_ldm",
    "save_vae",
    "tensor_to_frames",
    "train_ldm",
    "train_vae",
]
