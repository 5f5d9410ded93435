"""Deterministic VAE and LDM training loops with long-tail replay."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from tilegen.datagen.collect import Dataset
from tilegen.rng import mix
from tilegen.tilequest.engine import Action
from tilegen.worldmodel.config import LdmConfig, LongtailConfig, VaeConfig
from tilegen.worldmodel.dit import Dit, save_ldm
from tilegen.worldmodel.replay import LongtailQueue, longtail_probability
from tilegen.worldmodel.schedule import NoiseSchedule
from tilegen.worldmodel.vae import PerceptualPyramid, Vae, frames_to_tensor, save_vae

_MASK63 = (1 << 63) - 1


def step_generator(seed: int, step: int, salt: int = 0) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(mix(seed, step, salt) & _MASK63)
    return gen


class _FrameSource:
    """Uniform frame access over a dataset directory or a raw frame array."""

    def __init__(self, data):
        if isinstance(data, np.ndarray):
            if data.ndim != 4 or data.shape[-1] != 3:
                raise ValueError(f"expected (N,H,W,3) frames, got {data.shape}")
            self._frames = data
            self._ds = None
            self.count = data.shape[0]
        else:
            ds = data if isinstance(data, Dataset) else Dataset(data)
            self._ds = ds
            self._frames = None
            self._maps: dict[int, np.ndarray] = {}
            self.count = ds.episodes * ds.timesteps
        if self.count == 0:
            raise ValueError("empty dataset")

    def frame(self, i: int) -> np.ndarray:
        if self._frames is not None:
            return self._frames[i]
        ep, t = divmod(i, self._ds.timesteps)
        mm = self._maps.get(ep)
        if mm is None:
            mm = self._ds.frames_memmap(ep)
            self._maps[ep] = mm
        return np.asarray(mm[t])

    def batch(self, idx) -> np.ndarray:
        return np.stack([self.frame(int(i)) for i in idx])


@dataclass
class VaeTrainResult:
    model: Vae
    losses: list[dict]


def train_vae(
    data,
    cfg: VaeConfig,
    steps: int,
    seed: int,
    out: str | Path | None = None,
) -> VaeTrainResult:
    source = _FrameSource(data)
    torch.manual_seed(mix(seed, 0x7AE) & _MASK63)
    model = Vae(cfg)
    pyramid = PerceptualPyramid() if cfg.perceptual_weight > 0 else None
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    rows: list[dict] = []
    for step in range(steps):
        gen = step_generator(seed, step, 0xAE)
        idx = torch.randint(0, source.count, (cfg.batch_size,), generator=gen)
        x = frames_to_tensor(source.batch(idx.tolist()))
        mu, logvar = model.encode_params(x)
        eps = torch.randn(mu.shape, generator=gen)
        z = mu + torch.exp(0.5 * logvar) * eps
        xh = model.decode(z, clamp=False)
        recon = (xh - x).abs().mean()
        perc = pyramid(xh, x) if pyramid is not None else torch.zeros(())
        kl = -0.5 * torch.mean(1.0 + logvar - mu.pow(2) - logvar.exp())
        loss = recon + cfg.perceptual_weight * perc + cfg.kl_weight * kl
        opt.zero_grad()
        loss.backward()
        opt.step()
        rows.append(
            {
                "step": step,
                "loss": float(loss.detach()),
                "recon": float(recon.detach()),
                "perc": float(perc.detach()),
                "kl": float(kl.detach()),
            }
        )
    model.eval()
    if out is not None:
        save_vae(out, model, step=steps, extra={"seed": seed})
    return VaeTrainResult(model=model, losses=rows)


@torch.no_grad()
def encode_dataset(
    ds: Dataset, vae: Vae, batch: int = 64
) -> tuple[np.ndarray, float]:
    """Encode every frame to latents; returns (scaled latents, scale)."""
    vae.eval()
    hw = vae.cfg.latent_hw
    out = np.empty(
        (ds.episodes, ds.timesteps, vae.cfg.latent_channels, hw, hw), dtype=np.float32
    )
    total = 0.0
    total_sq = 0.0
    count = 0
    for ep in range(ds.episodes):
        frames = np.asarray(ds.frames_memmap(ep))
        for lo in range(0, ds.timesteps, batch):
            chunk = frames[lo : lo + batch]
            mu = vae.encode(frames_to_tensor(chunk)).numpy()
            out[ep, lo : lo + chunk.shape[0]] = mu
            total += float(mu.sum(dtype=np.float64))
            total_sq += float(np.square(mu, dtype=np.float64).sum())
            count += mu.size
    mean = total / count
    var = max(total_sq / count - mean * mean, 1e-12)
    scale = float(1.0 / np.sqrt(var))
    out *= scale
    return out, scale


def ldm_train_step(
    model: Dit,
    optimizer: torch.optim.Optimizer | None,
    schedule: NoiseSchedule,
    latents: torch.Tensor,
    cond_actions: torch.Tensor,
    gen: torch.Generator,
) -> tuple[float, np.ndarray]:
    """One diffusion-forcing update over (B, L) windows; returns per-sample losses."""
    if latents.dim() != 5:
        raise ValueError(f"expected (B,L,C,H,W) latents, got {tuple(latents.shape)}")
    b, length = latents.shape[0], latents.shape[1]
    if length < 2:
        raise ValueError("window must contain at least 2 frames")
    if cond_actions.shape != (b, length):
        raise ValueError("actions must be shaped (B, L)")
    cfg = model.cfg
    z = torch.zeros(b, cfg.z_channels, cfg.latent_hw, cfg.latent_hw)
    per_sample = torch.zeros(b)
    for t in range(length):
        x0 = latents[:, t]
        k = torch.randint(1, cfg.levels + 1, (b,), generator=gen)
        eps = torch.randn(x0.shape, generator=gen)
        x_noisy = schedule.add_noise(x0, k, eps)
        target = schedule.velocity(x0, eps, k)
        z, v_pred = model(z, x_noisy, cond_actions[:, t], k)
        per_sample = per_sample + (v_pred - target).pow(2).mean(dim=(1, 2, 3))
    per_sample = per_sample / length
    loss = per_sample.mean()
    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return float(loss.detach()), per_sample.detach().numpy()


def _window_actions(actions: np.ndarray, start: int, length: int) -> np.ndarray:
    """Conditioning action for frame j is the action that produced it."""
    idx = np.arange(start - 1, start + length - 1)
    out = actions[np.clip(idx, 0, None)].astype(np.int64)
    if start == 0:
        out[0] = int(Action.Noop)
    return out


@dataclass
class LdmTrainResult:
    model: Dit
    losses: list[dict]
    queue: LongtailQueue
    latent_scale: float


def _adam_tensors(model: Dit, opt: torch.optim.Adam) -> tuple[dict, int]:
    tensors = {}
    step = 0
    for name, param in model.named_parameters():
        state = opt.state.get(param)
        if not state:
            continue
        tensors[f"{name}.m"] = state["exp_avg"].detach().numpy()
        tensors[f"{name}.v"] = state["exp_avg_sq"].detach().numpy()
        step = int(state["step"])
    return tensors, step


def _restore_adam(model: Dit, opt: torch.optim.Adam, tensors: dict, step: int) -> None:
    for name, param in model.named_parameters():
        m = tensors.get(f"{name}.m")
        v = tensors.get(f"{name}.v")
        if m is None or v is None:
            continue
        opt.state[param] = {
            "step": torch.tensor(float(step)),
            "exp_avg": torch.from_numpy(m.copy()),
            "exp_avg_sq": torch.from_numpy(v.copy()),
        }


def train_ldm(
    data,
    vae: Vae,
    cfg: LdmConfig,
    longtail: LongtailConfig,
    steps: int,
    seed: int,
    out: str | Path | None = None,
    resume=None,
    checkpoint_every: int = 0,
) -> LdmTrainResult:
    ds = data if isinstance(data, Dataset) else Dataset(data)
    if ds.episodes == 0:
        raise ValueError("empty dataset")
    if vae.cfg.latent_hw != cfg.latent_hw or vae.cfg.latent_channels != cfg.latent_channels:
        raise ValueError("VAE latent shape does not match LDM config")
    latents, scale = encode_dataset(ds, vae)
    actions = np.stack([ds.actions(i) for i in range(ds.episodes)])
    length = cfg.sequence_length
    if ds.timesteps < length:
        raise ValueError(f"episodes shorter than sequence length {length}")
    starts = ds.timesteps - length + 1
    schedule = NoiseSchedule(cfg.levels, cfg.logsnr_max, cfg.logsnr_min)

    if resume is not None:
        model = resume.model
        model.train()
        opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        _restore_adam(model, opt, resume.opt_tensors, resume.extra["adam_step"])
        queue = LongtailQueue.from_state(longtail.capacity, resume.extra["queue"])
        recent = deque(resume.extra["recent"], maxlen=longtail.window)
        ref_losses = list(resume.extra["ref_losses"])
        first_step = resume.step
    else:
        torch.manual_seed(mix(seed, 0x1D7) & _MASK63)
        model = Dit(cfg)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
        queue = LongtailQueue(longtail.capacity)
        recent = deque(maxlen=longtail.window)
        ref_losses: list[float] = []
        first_step = 0

    rows: list[dict] = []

    def _checkpoint(path, step):
        opt_tensors, adam_step = _adam_tensors(model, opt)
        save_ldm(
            path,
            model,
            step=step,
            extra={
                "seed": seed,
                "latent_scale": scale,
                "adam_step": adam_step,
                "queue": queue.state(),
                "recent": list(recent),
                "ref_losses": ref_losses,
            },
            opt_tensors=opt_tensors,
        )

    for step in range(first_step, steps):
        gen = step_generator(seed, step, 0x1D)
        rng = np.random.default_rng(mix(seed, step, 0x2E))
        if (
            longtail.enabled
            and len(queue) > 0
            and len(ref_losses) >= longtail.window
            and recent
        ):
            ref = float(np.mean(ref_losses[: longtail.window]))
            p = longtail_probability(float(np.mean(recent)), ref, longtail.p_max)
        else:
            p = 0.0
        use_queue = bool(torch.rand(1, generator=gen).item() < p)
        if use_queue:
            keys = queue.sample(cfg.batch_size, rng)
        else:
            flat = rng.integers(0, ds.episodes * starts, size=cfg.batch_size)
            keys = [(int(i) // starts, int(i) % starts) for i in flat]
        lat = torch.from_numpy(
            np.stack([latents[ep, s : s + length] for ep, s in keys])
        )
        act = torch.from_numpy(
            np.stack([_window_actions(actions[ep], s, length) for ep, s in keys])
        )
        loss, per_sample = ldm_train_step(model, opt, schedule, lat, act, gen)
        for key, sample_loss in zip(keys, per_sample):
            queue.upsert(key, float(sample_loss))
        recent.append(loss)
        if len(ref_losses) < longtail.window:
            ref_losses.append(loss)
        rows.append(
            {
                "step": step,
                "loss": loss,
                "source": "queue" if use_queue else "dataset",
                "p": p,
            }
        )
        if checkpoint_every and out is not None and (step + 1) % checkpoint_every == 0:
            _checkpoint(out, step + 1)
    model.eval()
    if out is not None:
        _checkpoint(out, steps)
    return LdmTrainResult(model=model, losses=rows, queue=queue, latent_scale=scale)


@torch.no_grad()
def eval_velocity_loss(
    model: Dit,
    schedule: NoiseSchedule,
    latents: np.ndarray,
    cond_actions: np.ndarray,
    seed: int,
    batch: int = 8,
) -> float:
    """Fixed-noise velocity loss over (N, L) windows; paired across models."""
    model.eval()
    cfg = model.cfg
    total = 0.0
    count = 0
    n = latents.shape[0]
    for lo in range(0, n, batch):
        gen = step_generator(seed, lo, 0xE7)
        lat = torch.from_numpy(latents[lo : lo + batch])
        act = torch.from_numpy(cond_actions[lo : lo + batch].astype(np.int64))
        b, length = lat.shape[0], lat.shape[1]
        z = torch.zeros(b, cfg.z_channels, cfg.latent_hw, cfg.latent_hw)
        per = torch.zeros(b)
        for t in range(length):
            x0 = lat[:, t]
            k = torch.randint(1, cfg.levels + 1, (b,), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            x_noisy = schedule.add_noise(x0, k, eps)
            target = schedule.velocity(x0, eps, k)
            z, v_pred = model(z, x_noisy, act[:, t], k)
            per = per + (v_pred - target).pow(2).mean(dim=(1, 2, 3))
        total += float(per.sum()) / length
        count += b
    return total / count


def write_loss_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no loss rows to write")
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def plot_loss_png(path: str | Path, rows: list[dict], title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [row["step"] for row in rows]
    losses = [row["loss"] for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
