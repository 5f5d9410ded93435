"""Balanced dataset assembly: weight clusters with NNLS against the target
feature distribution, integerize to an episode budget, and materialize the
selected episodes as a new dataset directory with a balance.json report.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..datagen.collect import ACTION_COUNT, MANIFEST, Dataset, episode_filename
from ..rng import mix
from .cluster import kmeans
from .features import featurize, target_distribution
from .nnls import nnls_solve

BALANCE_JSON = "balance.json"


@dataclass
class BalanceResult:
    k: int
    y: np.ndarray
    b_real: np.ndarray
    b_int: np.ndarray
    residual: float
    assignments: np.ndarray
    selected: list[int]


def integerize(b_real: np.ndarray, populations: np.ndarray,
               budget: int | None = None) -> np.ndarray:
    """Round half-up and clamp each cluster to its population. With a budget,
    the weights are first rescaled so the clamped rounded total lands exactly
    on the attainable total, min(budget, positive-cluster population); clusters
    with zero weight never receive mass."""
    b_real = np.asarray(b_real, dtype=np.float64)
    populations = np.asarray(populations, dtype=np.int64)

    def clamp_round(scale: float) -> np.ndarray:
        r = np.floor(b_real * scale + 0.5).astype(np.int64)
        return np.minimum(r, populations)

    if budget is None:
        return clamp_round(1.0)
    total = b_real.sum()
    if total <= 0 or budget <= 0:
        return np.zeros(len(b_real), dtype=np.int64)

    pos = b_real > 0
    attainable = min(int(budget), int(populations[pos].sum()))
    lo, hi = 0.0, float((populations[pos].max() + 1) / b_real[pos].min())
    # the clamped rounded sum is a nondecreasing step function of the scale
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if int(clamp_round(mid).sum()) >= attainable:
            hi = mid
        else:
            lo = mid
    b_int = clamp_round(hi)
    # rounding can overshoot by more than one, so trim the most over-rounded
    # entries (largest b_int - share at the final scale, ties by index) until
    # the total lands exactly on the attainable count
    shares = np.minimum(b_real * hi, populations.astype(np.float64))
    for _ in range(int(b_int.sum()) - attainable):
        over = np.where(b_int > 0, b_int - shares, -np.inf)
        b_int[int(np.argmax(over))] -= 1
    return b_int


def sample_balanced(raw: Dataset, out_dir: str | Path, clusters: int, grid: int,
                    budget: int, seed: int) -> BalanceResult:
    """Build a balanced dataset from a raw one.

    Episodes are featurized and clustered; NNLS solves for nonnegative
    cluster weights whose centroid mixture best matches the target feature
    distribution; whole episodes are then drawn without replacement within
    each cluster. Selection order (cluster by cluster, draws seeded by the
    module seed) is deterministic.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    level = raw.level()
    n = len(raw)
    feats = np.stack([
        featurize(raw.load(i), grid, level.width, level.height) for i in range(n)
    ])
    centers, assign = kmeans(feats, clusters, seed)
    y = target_distribution(level, grid)
    C = centers.T  # (d, k): columns are cluster centroids
    b_real = nnls_solve(C, y)
    populations = np.bincount(assign, minlength=clusters)
    b_int = integerize(b_real, populations, budget)
    residual = float(np.linalg.norm(C @ b_real - y))

    rng = np.random.default_rng(mix(seed, 0xBA1A))
    selected: list[int] = []
    for c in range(clusters):
        members = np.flatnonzero(assign == c)
        take = int(b_int[c])
        if take <= 0:
            continue
        picked = rng.permutation(members)[:take]
        selected.extend(int(i) for i in sorted(picked))

    for j, src in enumerate(selected):
        shutil.copyfile(raw.path(src), out / episode_filename(j))

    manifest = dict(raw.manifest)
    manifest.update({
        "format_version": 1,
        "action_count": ACTION_COUNT,
        "episodes": len(selected),
        "balanced_from": str(raw.root),
    })
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))

    report = {
        "k": clusters,
        "y": y.tolist(),
        "b_real": b_real.tolist(),
        "b_int": b_int.tolist(),
        "residual": residual,
    }
    (out / BALANCE_JSON).write_text(json.dumps(report, indent=2))
    return BalanceResult(
        k=clusters, y=y, b_real=b_real, b_int=b_int, residual=residual,
        assignments=assign, selected=selected,
    )
