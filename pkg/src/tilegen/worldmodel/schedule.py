"""Variance-preserving noise schedule with a sigmoid log-SNR ramp."""

from __future__ import annotations

import numpy as np
import torch


class NoiseSchedule:
    """Discrete noise levels k = 0..levels with alpha_k^2 + sigma_k^2 = 1.

    log-SNR falls linearly from logsnr_max at k=0 to logsnr_min at k=levels;
    alpha_k^2 is the logistic of the log-SNR. Level 0 is clamped to exactly
    (alpha, sigma) = (1, 0) so that level-0 latents carry no noise.
    """

    def __init__(self, levels: int = 1000, logsnr_max: float = 9.0, logsnr_min: float = -9.0):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if not logsnr_max > logsnr_min:
            raise ValueError("logsnr_max must exceed logsnr_min")
        self.levels = levels
        self.logsnr_max = float(logsnr_max)
        self.logsnr_min = float(logsnr_min)
        u = np.arange(levels + 1, dtype=np.float64) / levels
        logsnr = logsnr_max - u * (logsnr_max - logsnr_min)
        alpha_sq = 1.0 / (1.0 + np.exp(-logsnr))
        self.alphas = np.sqrt(alpha_sq)
        self.sigmas = np.sqrt(1.0 - alpha_sq)
        self.alphas[0] = 1.0
        self.sigmas[0] = 0.0
        self.alphas.setflags(write=False)
        self.sigmas.setflags(write=False)
        self._tables: dict = {}

    def alpha_sigma(self, k: int) -> tuple[float, float]:
        k = int(k)
        if not 0 <= k <= self.levels:
            raise ValueError(f"noise level {k} outside [0, {self.levels}]")
        return float(self.alphas[k]), float(self.sigmas[k])

    def _coeffs(self, k, ref: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if isinstance(k, torch.Tensor):
            idx = k.long()
            if idx.numel() == 0 or int(idx.min()) < 0 or int(idx.max()) > self.levels:
                raise ValueError(f"noise levels outside [0, {self.levels}]")
            tables = self._tables.get(ref.dtype)
            if tables is None:
                tables = (
                    torch.from_numpy(self.alphas.copy()).to(ref.dtype),
                    torch.from_numpy(self.sigmas.copy()).to(ref.dtype),
                )
                self._tables[ref.dtype] = tables
            alpha = tables[0][idx]
            sigma = tables[1][idx]
            while alpha.dim() < ref.dim():
                alpha = alpha.unsqueeze(-1)
                sigma = sigma.unsqueeze(-1)
            return alpha, sigma
        a, s = self.alpha_sigma(k)
        one = torch.tensor(a, dtype=ref.dtype)
        two = torch.tensor(s, dtype=ref.dtype)
        return one, two

    def add_noise(self, x0: torch.Tensor, k, eps: torch.Tensor) -> torch.Tensor:
        if x0.shape != eps.shape:
            raise ValueError(f"shape mismatch: {tuple(x0.shape)} vs {tuple(eps.shape)}")
        alpha, sigma = self._coeffs(k, x0)
        return alpha * x0 + sigma * eps

    def velocity(self, x0: torch.Tensor, eps: torch.Tensor, k) -> torch.Tensor:
        if x0.shape != eps.shape:
            raise ValueError(f"shape mismatch: {tuple(x0.shape)} vs {tuple(eps.shape)}")
        alpha, sigma = self._coeffs(k, x0)
        return alpha * eps - sigma * x0

    def recover(self, x_k: torch.Tensor, v: torch.Tensor, k) -> tuple[torch.Tensor, torch.Tensor]:
        if x_k.shape != v.shape:
            raise ValueError(f"shape mismatch: {tuple(x_k.shape)} vs {tuple(v.shape)}")
        alpha, sigma = self._coeffs(k, x_k)
        x0 = alpha * x_k - sigma * v
        eps = sigma * x_k + alpha * v
        return x0, eps
