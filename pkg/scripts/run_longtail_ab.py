#!/usr/bin/env python3
"""Paired A/B run for the long-tail replay queue.

Builds a training set where power-up consumptions are rare, trains two world
models from the same seed (replay queue enabled vs disabled), and scores both
on held-out windows around power-up transitions. Writes summary.json with the
paired losses and the relative improvement.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np
import torch

from tilegen.datagen.collect import Dataset, collect_episode, episode_filename
from tilegen.datagen.episodes import write_episode
from tilegen.rng import mix
from tilegen.tilequest import gen_level
from tilegen.worldmodel.config import LdmConfig, LongtailConfig, VaeConfig
from tilegen.worldmodel.dit import load_ldm
from tilegen.worldmodel.schedule import NoiseSchedule
from tilegen.worldmodel.training import step_generator, train_ldm, train_vae
from tilegen.worldmodel.vae import frames_to_tensor, load_vae

LEVEL_SEED = 3
WIDTH = 24
TILE_PX = 4
TIMESTEPS = 64

VAE_CFG = VaeConfig(
    frame_px=32, base_channels=16,
    perceptual_weight=1.0, learning_rate=3e-4, batch_size=8,
)
LDM_CFG = LdmConfig(
    dit_depth=3, hidden_size=96, heads=4, patch_size=2, sequence_length=16,
    action_embed_dim=48, k_embed_dim=48, z_channels=16, latent_channels=4,
    latent_hw=8, learning_rate=3e-4, batch_size=8,
)


def _write_set(dir_path: Path, episodes: list, seed: int) -> Dataset:
    dir_path.mkdir(parents=True, exist_ok=True)
    for i, ep in enumerate(episodes):
        write_episode(dir_path / episode_filename(i), ep)
    manifest = {
        "format_version": 1,
        "frame_w": 8 * TILE_PX,
        "frame_h": 8 * TILE_PX,
        "action_count": 7,
        "episodes": len(episodes),
        "timesteps": TIMESTEPS,
        "seed": seed,
        "p_random": 0.5,
        "level": {"seed": LEVEL_SEED, "width": WIDTH},
    }
    (dir_path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return Dataset(dir_path)


def build_sets(out: Path, seed: int, clean: int, event: int, heldout: int):
    """Collect until enough clean and event episodes exist, then write a
    skewed training set and an event-only held-out set."""
    m = gen_level(LEVEL_SEED, WIDTH)
    clean_eps, event_eps = [], []
    need_event = event + heldout
    i = 0
    while (len(clean_eps) < clean or len(event_eps) < need_event) and i < 40 * (clean + need_event):
        ep = collect_episode(m, TIMESTEPS, mix(seed, i), 0.5, tile_px=TILE_PX)
        if np.any(ep.events & 1):
            if len(event_eps) < need_event:
                event_eps.append(ep)
        elif len(clean_eps) < clean:
            clean_eps.append(ep)
        i += 1
    if len(clean_eps) < clean or len(event_eps) < need_event:
        raise RuntimeError(
            f"collection exhausted after {i} episodes: "
            f"{len(clean_eps)}/{clean} clean, {len(event_eps)}/{need_event} event"
        )
    train = _write_set(out / "train", clean_eps + event_eps[:event], seed)
    held = _write_set(out / "heldout", event_eps[event:], seed)
    return train, held


def event_windows(ds: Dataset, length: int, lead: int = 2):
    """(episode, start) pairs whose window contains a power-up transition at
    position >= lead, plus a per-window mask of the transition and the two
    frames after it."""
    starts, masks = [], []
    for e in range(ds.episodes):
        ep = ds.load(e)
        for t in np.flatnonzero(ep.events & 1):
            lo = max(0, int(t) - length + 1 + lead)
            hi = min(int(t) - lead, ds.timesteps - length)
            for s in range(lo, hi + 1):
                mask = np.zeros(length, dtype=bool)
                rel = int(t) - s
                mask[rel:min(rel + 3, length)] = True
                starts.append((e, s))
                masks.append(mask)
    return starts, np.stack(masks) if masks else np.zeros((0, length), dtype=bool)


def encode_windows(ds: Dataset, vae, scale: float, windows, length: int):
    lats, acts = [], []
    with torch.no_grad():
        for e, s in windows:
            frames = np.asarray(ds.frames_memmap(e)[s:s + length])
            lats.append((vae.encode(frames_to_tensor(frames)) * scale).numpy())
            acts.append(ds.actions(e)[s:s + length])
    return np.stack(lats), np.stack(acts)


@torch.no_grad()
def masked_velocity_loss(model, schedule, latents, actions, masks, seed,
                         repeats: int = 6, batch: int = 8) -> float:
    """Velocity loss restricted to masked positions, noise paired by seed."""
    model.eval()
    cfg = model.cfg
    total = 0.0
    count = 0
    n = latents.shape[0]
    for rep in range(repeats):
        for lo in range(0, n, batch):
            gen = step_generator(seed, rep * n + lo, 0xAB)
            lat = torch.from_numpy(latents[lo:lo + batch])
            act = torch.from_numpy(actions[lo:lo + batch].astype(np.int64))
            msk = torch.from_numpy(masks[lo:lo + batch])
            b, length = lat.shape[0], lat.shape[1]
            z = torch.zeros(b, cfg.z_channels, cfg.latent_hw, cfg.latent_hw)
            for t in range(length):
                x0 = lat[:, t]
                k = torch.randint(1, cfg.levels + 1, (b,), generator=gen)
                eps = torch.randn(x0.shape, generator=gen)
                x_noisy = schedule.add_noise(x0, k, eps)
                target = schedule.velocity(x0, eps, k)
                z, v_pred = model(z, x_noisy, act[:, t], k)
                per = (v_pred - target).pow(2).mean(dim=(1, 2, 3))
                sel = msk[:, t]
                total += float(per[sel].sum())
                count += int(sel.sum())
    return total / count


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/longtail")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--steps", type=int, default=2600)
    ap.add_argument("--vae-steps", type=int, default=1200)
    ap.add_argument("--clean", type=int, default=76)
    ap.add_argument("--event", type=int, default=4)
    ap.add_argument("--heldout", type=int, default=16)
    ap.add_argument("--capacity", type=int, default=256)
    ap.add_argument("--p-max", type=float, default=0.3)
    ap.add_argument("--window", type=int, default=100)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    torch.set_num_threads(args.threads)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()

    print(f"building sets: {args.clean} clean + {args.event} event train, "
          f"{args.heldout} event held out")
    if (out / "train" / "manifest.json").exists() and (out / "heldout" / "manifest.json").exists():
        train, held = Dataset(out / "train"), Dataset(out / "heldout")
        print("reusing existing sets")
    else:
        train, held = build_sets(out, args.seed, args.clean, args.event, args.heldout)

    vae_ckpt = out / "vae.ckpt"
    if vae_ckpt.exists():
        vae = load_vae(vae_ckpt).model
        print("reusing existing vae")
    else:
        print(f"training shared vae for {args.vae_steps} steps")
        vae = train_vae(train, VAE_CFG, args.vae_steps, args.seed, out=vae_ckpt).model

    losses = {}
    scale = None
    for name, enabled in (("on", True), ("off", False)):
        ckpt = out / f"ldm_{name}.ckpt"
        if ckpt.exists():
            loaded = load_ldm(ckpt)
            model, scale_run = loaded.model, float(loaded.extra["latent_scale"])
            print(f"reusing ldm_{name}")
        else:
            print(f"training ldm_{name} ({args.steps} steps, queue {'on' if enabled else 'off'})")
            longtail = LongtailConfig(enabled=enabled, capacity=args.capacity,
                                      p_max=args.p_max, window=args.window)
            result = train_ldm(train, vae, LDM_CFG, longtail, args.steps,
                               args.seed, out=ckpt)
            model, scale_run = result.model, result.latent_scale
            queue_share = sum(1 for r in result.losses if r["source"] == "queue")
            print(f"  queue-sourced batches: {queue_share}/{len(result.losses)}")
        losses[name] = model
        scale = scale_run

    windows, masks = event_windows(held, LDM_CFG.sequence_length)
    if not windows:
        raise RuntimeError("no power-up windows in the held-out set")
    print(f"scoring {len(windows)} held-out transition windows")
    lat, act = encode_windows(held, vae, scale, windows, LDM_CFG.sequence_length)
    schedule = NoiseSchedule(LDM_CFG.levels, LDM_CFG.logsnr_max, LDM_CFG.logsnr_min)
    on_loss = masked_velocity_loss(losses["on"], schedule, lat, act, masks, args.seed)
    off_loss = masked_velocity_loss(losses["off"], schedule, lat, act, masks, args.seed)
    margin = (off_loss - on_loss) / off_loss

    summary = {
        "on_loss": on_loss,
        "off_loss": off_loss,
        "margin": margin,
        "steps": args.steps,
        "seed": args.seed,
        "train_clean": args.clean,
        "train_event": args.event,
        "heldout_episodes": held.episodes,
        "windows": len(windows),
        "capacity": args.capacity,
        "p_max": args.p_max,
        "window": args.window,
        "elapsed_s": round(time.monotonic() - t0, 1),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(f"on={on_loss:.5f} off={off_loss:.5f} improvement={margin:.1%} "
          f"({summary['elapsed_s']}s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
