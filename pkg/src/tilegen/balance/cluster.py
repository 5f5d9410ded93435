"""Plain k-means with pinned deterministic semantics: k-means++ seeding from
the module seed, argmin assignment with lowest-index tie-breaking, empty
clusters reseeded to the point farthest from its assigned center, termination
on stable assignments or 100 iterations.
"""

from __future__ import annotations

import numpy as np

MAX_ITERS = 100


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (n, k) squared euclidean distances
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centers[i] = points[idx]
        d = ((points - centers[i]) ** 2).sum(axis=1)
        closest = np.minimum(closest, d)
    return centers


def kmeans(points: np.ndarray, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Cluster points into k groups. Returns (centers (k, d), assign (n,)).

    Requires k <= n. After convergence every center equals the mean of its
    assigned points, so centers double as cluster centroids downstream.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if k <= 0 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k} n={n}")
    rng = np.random.default_rng(seed)
    centers = _plusplus_init(points, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(MAX_ITERS):
        d = _sq_dists(points, centers)
        new_assign = d.argmin(axis=1)  # argmin takes the lowest index on ties
        # reseed empty clusters with the globally farthest point
        for c in range(k):
            if not (new_assign == c).any():
                far = int(d[np.arange(n), new_assign].argmax())
                centers[c] = points[far]
                d = _sq_dists(points, centers)
                new_assign = d.argmin(axis=1)
        if (new_assign == assign).all():
            break
        assign = new_assign
        for c in range(k):
            mask = assign == c
            if mask.any():
                centers[c] = points[mask].mean(axis=0)
    return centers, assign
