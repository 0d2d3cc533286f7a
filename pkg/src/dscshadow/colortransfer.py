"""Least-squares color compensation between a shadow / shadow-free pair.

A 3x4 affine map (rows R,G,B; columns r,g,b,1) is fitted over the non-shadow
region so that the mapped shadow-free image matches the shadow image there,
reconciling exposure and illumination drift between the two captures. The
solve uses an orthogonal factorization (numpy.linalg.lstsq); tests compare it
against a hand-rolled normal-equations oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class TransferFitError(ValueError):
    """Region unusable for fitting (too small or color-degenerate)."""


@dataclass
class TransferMatrix:
    """Fitted 3x4 color map with its fit residual.

    ``residual`` is the mean squared error per channel sample over the
    fitting region; ``sample_count`` the number of pixel pairs used.
    """

    m: np.ndarray
    residual: float
    sample_count: int

    IDENTITY = np.hstack([np.eye(3), np.zeros((3, 1))])

    def to_json(self) -> str:
        return json.dumps({
            "matrix": [round(v, 12) for v in self.m.reshape(-1).tolist()],
            "residual": self.residual,
            "sample_count": self.sample_count,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TransferMatrix":
        obj = json.loads(text)
        m = np.asarray(obj["matrix"], dtype=np.float64).reshape(3, 4)
        return cls(m, float(obj["residual"]), int(obj["sample_count"]))


def _augment(pixels: np.ndarray) -> np.ndarray:
    return np.hstack([pixels, np.ones((pixels.shape[0], 1))])


def region_error(shadow: np.ndarray, mapped_free: np.ndarray,
                 region: np.ndarray) -> float:
    """Mean squared per-channel discrepancy between two rasters on a region."""
    d = np.asarray(shadow, dtype=np.float64)[region] - \
        np.asarray(mapped_free, dtype=np.float64)[region]
    if d.size == 0:
        raise TransferFitError("empty region")
    return float(np.mean(d * d))


def fit_transfer(shadow: np.ndarray, shadow_free: np.ndarray,
                 nonshadow_mask: np.ndarray) -> TransferMatrix:
    """Fit the 3x4 map minimizing |shadow - M [free,1]|^2 over the region.

    ``nonshadow_mask`` is boolean, True where the pair is compared. Needs at
    least 4 pixels whose augmented colors span rank 4.
    """
    shadow = np.asarray(shadow, dtype=np.float64)
    shadow_free = np.asarray(shadow_free, dtype=np.float64)
    region = np.asarray(nonshadow_mask, dtype=bool)
    if shadow.shape != shadow_free.shape or shadow.shape[:-1] != region.shape:
        raise TransferFitError(
            f"shape mismatch: {shadow.shape}, {shadow_free.shape}, mask {region.shape}")
    n = int(np.count_nonzero(region))
    if n == 0:
        raise TransferFitError("empty non-shadow region")
    if n < 4:
        raise TransferFitError(f"only {n} region pixels, need at least 4")
    a = _augment(shadow_free[region].reshape(n, 3))
    b = shadow[region].reshape(n, 3)
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < 4:
        raise TransferFitError(
            f"degenerate region: augmented colors span rank {rank} < 4")
    m = sol.T  # 3x4
    res = b - a @ sol
    return TransferMatrix(m, float(np.mean(res * res)), n)


def apply_transfer(image: np.ndarray, t: TransferMatrix) -> np.ndarray:
    """Map every pixel through the affine transfer, clamped to [0, 255]."""
    img = np.asarray(image, dtype=np.float64)
    out = img @ t.m[:, :3].T + t.m[:, 3]
    return np.clip(out, 0.0, 255.0)
