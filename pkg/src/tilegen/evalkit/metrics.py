"""Playability and fidelity metrics over generated trajectories."""

from __future__ import annotations

import numpy as np

PSNR_CAP = 99.0


def act_acc(pred, gt) -> float:
    """Fraction of positions where the predicted action matches ground truth."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise ValueError(f"action arrays must match 1-d, got {pred.shape} vs {gt.shape}")
    if pred.shape[0] == 0:
        raise ValueError("need at least one action")
    return float(np.mean(pred == gt))


def prob_diff(probs, gt) -> float:
    """Mean of P(argmax) - P(gt) per frame; argmax ties go to the lowest id.

    Non-negative by construction since the argmax maximizes each row.
    """
    probs = np.asarray(probs, dtype=np.float64)
    gt = np.asarray(gt)
    if probs.ndim != 2:
        raise ValueError(f"expected (L, actions) probabilities, got {probs.shape}")
    if gt.shape != (probs.shape[0],):
        raise ValueError(f"ground truth must be ({probs.shape[0]},), got {gt.shape}")
    if probs.shape[0] == 0:
        raise ValueError("need at least one frame")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("each row must be a probability simplex")
    if np.any(gt < 0) or np.any(gt >= probs.shape[1]):
        raise ValueError("ground-truth action out of range")
    top = np.argmax(probs, axis=1)
    rows = np.arange(probs.shape[0])
    return float(np.mean(probs[rows, top] - probs[rows, gt]))


def psnr(pred, gt) -> float:
    """10*log10(255^2 / MSE) over all bytes, capped at 99 for identical input."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"frame shapes differ: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ValueError("empty frames")
    mse = np.mean((pred.astype(np.float64) - gt.astype(np.float64)) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(255.0 ** 2 / mse), PSNR_CAP))


def feature_distance(a, b) -> float:
    """Mean per-frame L2 distance between two stacks of latent features."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim < 2:
        raise ValueError(f"feature shapes differ: {a.shape} vs {b.shape}")
    diff = (a - b).reshape(a.shape[0], -1)
    return float(np.mean(np.linalg.norm(diff, axis=1)))
