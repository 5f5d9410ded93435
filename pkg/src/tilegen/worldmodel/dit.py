"""Recurrent DiT denoiser: hidden state in, next hidden state and velocity out."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn
from torch.nn import functional as F

from tilegen import kvconfig
from tilegen.worldmodel.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from tilegen.worldmodel.config import LdmConfig


def sinusoidal_embedding(k: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float32) / half
    )
    args = k.to(torch.float32).unsqueeze(-1) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class _SelfAttention(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.proj = nn.Linear(hidden, hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, h = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, t, self.heads, -1).transpose(1, 2)
        k = k.view(b, t, self.heads, -1).transpose(1, 2)
        v = v.view(b, t, self.heads, -1).transpose(1, 2)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, t, h))


class _CrossAttention(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(hidden, hidden)
        self.kv = nn.Linear(hidden, 2 * hidden)
        self.proj = nn.Linear(hidden, hidden)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        b, t, h = x.shape
        s = cond.shape[1]
        q = self.q(x).view(b, t, self.heads, -1).transpose(1, 2)
        k, v = self.kv(cond).chunk(2, dim=-1)
        k = k.view(b, s, self.heads, -1).transpose(1, 2)
        v = v.view(b, s, self.heads, -1).transpose(1, 2)
        out = F.scaled_dot_product_attention(q, k, v)
        return self.proj(out.transpose(1, 2).reshape(b, t, h))


class _Block(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(hidden)
        self.attn = _SelfAttention(hidden, heads)
        self.norm2 = nn.LayerNorm(hidden)
        self.cross = _CrossAttention(hidden, heads)
        self.norm3 = nn.LayerNorm(hidden)
        self.mlp = nn.Sequential(
            nn.Linear(hidden, 4 * hidden),
            nn.SiLU(),
            nn.Linear(4 * hidden, hidden),
        )

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.cross(self.norm2(x), cond)
        return x + self.mlp(self.norm3(x))


class Dit(nn.Module):
    """One recurrence step: (z_t, noisy x, action, level) -> (z_{t+1}, v)."""

    def __init__(self, cfg: LdmConfig):
        super().__init__()
        self.cfg = cfg
        in_ch = cfg.z_channels + cfg.latent_channels
        grid = cfg.latent_hw // cfg.patch_size
        self.grid = grid
        self.patch = nn.Conv2d(in_ch, cfg.hidden_size, cfg.patch_size, stride=cfg.patch_size)
        self.pos = nn.Parameter(torch.zeros(1, grid * grid, cfg.hidden_size))
        self.action_embed = nn.Embedding(cfg.action_count, cfg.action_embed_dim)
        self.action_proj = nn.Linear(cfg.action_embed_dim, cfg.hidden_size)
        self.k_proj = nn.Sequential(
            nn.Linear(cfg.k_embed_dim, cfg.hidden_size),
            nn.SiLU(),
            nn.Linear(cfg.hidden_size, cfg.hidden_size),
        )
        self.blocks = nn.ModuleList(
            _Block(cfg.hidden_size, cfg.heads) for _ in range(cfg.dit_depth)
        )
        self.norm_out = nn.LayerNorm(cfg.hidden_size)
        self.z_head = nn.Linear(
            cfg.hidden_size, cfg.patch_size * cfg.patch_size * cfg.z_channels
        )
        self.v_conv1 = nn.Conv2d(cfg.z_channels, cfg.z_channels, 3, padding=1)
        self.v_conv2 = nn.Conv2d(cfg.z_channels, cfg.latent_channels, 3, padding=1)
        self._init_weights()

    def _init_weights(self):
        for module in self.modules():
            if isinstance(module, (nn.Linear, nn.Conv2d)):
                nn.init.trunc_normal_(module.weight, std=0.02)
                if module.bias is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.trunc_normal_(module.weight, std=0.02)
        nn.init.trunc_normal_(self.pos, std=0.02)
        # The v head starts at zero; gradients reach it through z_next.
        nn.init.zeros_(self.v_conv2.weight)
        nn.init.zeros_(self.v_conv2.bias)

    def _as_index(self, value, batch: int, upper: int, label: str) -> torch.Tensor:
        if isinstance(value, torch.Tensor):
            idx = value.long().reshape(-1)
            if idx.shape[0] == 1 and batch > 1:
                idx = idx.expand(batch)
        else:
            idx = torch.full((batch,), int(value), dtype=torch.long)
        if idx.shape[0] != batch:
            raise ValueError(f"{label} batch {idx.shape[0]} does not match {batch}")
        if idx.numel() and (int(idx.min()) < 0 or int(idx.max()) >= upper):
            raise ValueError(f"{label} outside [0, {upper})")
        return idx

    def forward(self, z: torch.Tensor, x_noisy: torch.Tensor, action, k):
        cfg = self.cfg
        if z.dim() != 4 or z.shape[1:] != (cfg.z_channels, cfg.latent_hw, cfg.latent_hw):
            raise ValueError(f"bad hidden state shape {tuple(z.shape)}")
        if x_noisy.dim() != 4 or x_noisy.shape[1:] != (
            cfg.latent_channels,
            cfg.latent_hw,
            cfg.latent_hw,
        ):
            raise ValueError(f"bad latent shape {tuple(x_noisy.shape)}")
        if z.shape[0] != x_noisy.shape[0]:
            raise ValueError("hidden state and latent batch sizes differ")
        b = z.shape[0]
        act = self._as_index(action, b, cfg.action_count, "action")
        lvl = self._as_index(k, b, cfg.levels + 1, "noise level")

        tokens = self.patch(torch.cat([z, x_noisy], dim=1))
        tokens = tokens.flatten(2).transpose(1, 2) + self.pos
        cond = torch.stack(
            [
                self.action_proj(self.action_embed(act)),
                self.k_proj(sinusoidal_embedding(lvl, cfg.k_embed_dim)),
            ],
            dim=1,
        )
        for block in self.blocks:
            tokens = block(tokens, cond)
        tokens = self.norm_out(tokens)

        p, c = cfg.patch_size, cfg.z_channels
        zp = self.z_head(tokens).view(b, self.grid, self.grid, p, p, c)
        zp = zp.permute(0, 5, 1, 3, 2, 4).reshape(b, c, self.grid * p, self.grid * p)
        z_next = torch.tanh(zp)
        v_pred = self.v_conv2(F.silu(self.v_conv1(z_next)))
        return z_next, v_pred


def dit_step(model: Dit, z, x_noisy, action, k):
    return model(z, x_noisy, action, k)


@dataclass
class LoadedLdm:
    model: Dit
    cfg: LdmConfig
    step: int
    extra: dict
    opt_tensors: dict


def save_ldm(
    path: str | Path,
    model: Dit,
    step: int = 0,
    extra: dict | None = None,
    opt_tensors: dict | None = None,
) -> None:
    tensors = {
        f"model.{name}": value.detach().cpu().numpy()
        for name, value in model.state_dict().items()
    }
    for name, value in (opt_tensors or {}).items():
        tensors[f"adam.{name}"] = value
    save_checkpoint(
        path,
        kind="ldm",
        config=kvconfig.to_mapping(model.cfg),
        tensors=tensors,
        step=step,
        extra=extra,
    )


def load_ldm(path: str | Path) -> LoadedLdm:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "ldm":
        raise CheckpointError(f"{path}: expected an ldm checkpoint, got {ckpt.kind!r}")
    cfg = kvconfig.from_mapping(LdmConfig, ckpt.config)
    model = Dit(cfg)
    state = {}
    opt_tensors = {}
    for name, value in ckpt.tensors.items():
        if name.startswith("model."):
            state[name[len("model.") :]] = torch.from_numpy(value)
        elif name.startswith("adam."):
            opt_tensors[name[len("adam.") :]] = value
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: parameter mismatch: {exc}") from exc
    model.eval()
    return LoadedLdm(model=model, cfg=cfg, step=ckpt.step, extra=ckpt.extra, opt_tensors=opt_tensors)
