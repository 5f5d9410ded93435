"""Trajectory evaluation: rollouts against ground truth across lengths."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..datagen.collect import Dataset
from ..rng import mix
from ..worldmodel.sampler import rollout
from ..worldmodel.vae import Vae, frames_to_tensor
from .metrics import PSNR_CAP, act_acc, prob_diff
from .vam import Vam, vam_window_probs

REPORT_VERSION = 1
_MASK63 = (1 << 63) - 1


@dataclass
class Trajectory:
    frames: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        self.actions = np.asarray(self.actions)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ValueError(f"expected (T,H,W,3) frames, got {self.frames.shape}")
        if self.actions.shape != (self.frames.shape[0],):
            raise ValueError("actions must be (T,) matching frames")


def load_trajectories(data, limit: int | None = None) -> list[Trajectory]:
    ds = data if isinstance(data, Dataset) else Dataset(data)
    count = ds.episodes if limit is None else min(limit, ds.episodes)
    out = []
    for i in range(count):
        out.append(Trajectory(np.asarray(ds.frames_memmap(i)), ds.actions(i)))
    return out


@dataclass
class EvalReport:
    version: int
    model: str
    vam: str
    ddim_steps: int
    lengths: list[int]
    trajectories: int
    skipped: int
    records: list[dict] = field(default_factory=list)

    def value(self, length: int, metric: str) -> float:
        for rec in self.records:
            if rec["length"] == length and rec["metric"] == metric:
                return rec["value"]
        raise KeyError(f"no record for length={length} metric={metric}")

    def as_dict(self) -> dict:
        return {
            "version": self.version,
            "kind": "eval-report",
            "model": self.model,
            "vam": self.vam,
            "ddim_steps": self.ddim_steps,
            "lengths": self.lengths,
            "trajectories": self.trajectories,
            "skipped": self.skipped,
            "records": self.records,
        }


def neural_sampler(model, vae, schedule, ddim_steps: int, latent_scale: float, seed: int):
    """Sampler closure for evaluate(); one deterministic stream per trajectory."""

    def sample(traj: Trajectory, length: int, index: int) -> np.ndarray:
        return rollout(
            model, vae, schedule,
            traj.frames[0], traj.actions[:length],
            steps=ddim_steps, seed=mix(seed, index) & _MASK63,
            latent_scale=latent_scale,
        )

    return sample


def replay_sampler(traj: Trajectory, length: int, index: int) -> np.ndarray:
    """Ground-truth passthrough; the self-evaluation upper bound."""
    return traj.frames[1:length + 1]


def _encode_features(vae: Vae, frames: np.ndarray, batch: int = 64) -> np.ndarray:
    out = []
    with torch.no_grad():
        for lo in range(0, frames.shape[0], batch):
            out.append(vae.encode(frames_to_tensor(frames[lo:lo + batch])).numpy())
    return np.concatenate(out, axis=0)


def evaluate(
    sampler,
    vam: Vam | None,
    trajectories: list[Trajectory],
    lengths,
    vae: Vae | None = None,
    ddim_steps: int = 4,
    model_id: str = "",
    vam_id: str = "",
) -> EvalReport:
    """Roll out each trajectory once and score every prefix length.

    Playability metrics need a 32-frame context window, so act_acc and
    prob_diff records appear only for lengths >= 32 (and only when a valid
    action model is supplied). Trajectories shorter than max(lengths) + 17
    are skipped and counted.
    """
    lengths = sorted(set(int(x) for x in lengths))
    if not lengths or lengths[0] < 1:
        raise ValueError("lengths must be positive")
    max_len = lengths[-1]
    required = max_len + 17
    playable = []
    if vam is not None:
        playable = [x for x in lengths if x >= max(32, vam.cfg.window)]

    sums: dict[tuple[int, str], float] = {}
    evaluated = 0
    skipped = 0
    for index, traj in enumerate(trajectories):
        if traj.frames.shape[0] < required:
            skipped += 1
            continue
        gen = np.asarray(sampler(traj, max_len, index))
        if gen.shape != (max_len, *traj.frames.shape[1:]):
            raise ValueError(f"sampler returned {gen.shape}, expected "
                             f"{(max_len, *traj.frames.shape[1:])}")
        gt = traj.frames[1:max_len + 1]
        sq = np.mean(
            (gen.astype(np.float64) - gt.astype(np.float64)) ** 2, axis=(1, 2, 3)
        )
        dist = None
        if vae is not None:
            gen_f = _encode_features(vae, gen)
            gt_f = _encode_features(vae, gt)
            diff = (gen_f - gt_f).reshape(max_len, -1).astype(np.float64)
            dist = np.linalg.norm(diff, axis=1)
        for length in lengths:
            mse = float(np.mean(sq[:length]))
            value = PSNR_CAP if mse == 0 else min(
                10.0 * np.log10(255.0 ** 2 / mse), PSNR_CAP
            )
            sums[(length, "psnr")] = sums.get((length, "psnr"), 0.0) + value
            if dist is not None:
                sums[(length, "feature_distance")] = (
                    sums.get((length, "feature_distance"), 0.0)
                    + float(np.mean(dist[:length]))
                )
        for length in playable:
            probs = vam_window_probs(vam, gen[:length])
            radius = vam.cfg.radius
            refs = traj.actions[radius + 1:length - radius + 1]
            pred = np.argmax(probs, axis=1)
            sums[(length, "act_acc")] = (
                sums.get((length, "act_acc"), 0.0) + act_acc(pred, refs)
            )
            sums[(length, "prob_diff")] = (
                sums.get((length, "prob_diff"), 0.0) + prob_diff(probs, refs)
            )
        evaluated += 1

    records = [
        {"length": length, "metric": metric, "value": float(total / evaluated)}
        for (length, metric), total in sorted(
            sums.items(), key=lambda kv: (kv[0][0], kv[0][1])
        )
    ] if evaluated else []
    return EvalReport(
        version=REPORT_VERSION,
        model=model_id,
        vam=vam_id,
        ddim_steps=ddim_steps,
        lengths=lengths,
        trajectories=evaluated,
        skipped=skipped,
        records=records,
    )


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.as_dict(), indent=2) + "\n")


def load_report(path: str | Path) -> EvalReport:
    raw = json.loads(Path(path).read_text())
    if raw.get("version") != REPORT_VERSION or raw.get("kind") != "eval-report":
        raise ValueError(f"not a version-{REPORT_VERSION} eval report: {path}")
    return EvalReport(
        version=raw["version"],
        model=raw["model"],
        vam=raw["vam"],
        ddim_steps=raw["ddim_steps"],
        lengths=raw["lengths"],
        trajectories=raw["trajectories"],
        skipped=raw["skipped"],
        records=raw["records"],
    )


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["length", "metric", "value"])
        for rec in report.records:
            writer.writerow([rec["length"], rec["metric"], rec["value"]])


def format_report(report: EvalReport) -> str:
    """Fixed-width table, one metric per row, one length per column."""
    metrics = sorted(set(rec["metric"] for rec in report.records))
    lines = [
        f"trajectories={report.trajectories} skipped={report.skipped} "
        f"ddim_steps={report.ddim_steps}",
        "metric".ljust(18) + "".join(str(x).rjust(10) for x in report.lengths),
    ]
    for metric in metrics:
        cells = []
        for length in report.lengths:
            try:
                cells.append(f"{report.value(length, metric):.3f}".rjust(10))
            except KeyError:
                cells.append("-".rjust(10))
        lines.append(metric.ljust(18) + "".join(cells))
    return "\n".join(lines)


def render_report_pngs(report: EvalReport, out_dir: str | Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in sorted(set(rec["metric"] for rec in report.records)):
        pts = [
            (rec["length"], rec["value"])
            for rec in report.records if rec["metric"] == metric
        ]
        pts.sort()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o")
        ax.set_xlabel("prediction length")
        ax.set_ylabel(metric)
        ax.set_xscale("log", base=2)
        ax.set_title(metric)
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        paths.append(path)
    return paths
