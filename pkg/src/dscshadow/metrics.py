"""Detection and removal quality metrics.

Detection quality is summarized by per-image pixel counts (MaskStats) feeding
the accuracy and balance-error-rate formulas; removal quality by RMSE in LAB
space, optionally restricted to a pixel region. Dataset-level numbers pool
the raw counts over all images (per-image averages are reported alongside by
the evaluation driver).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Degenerate input a metric cannot be computed on."""


@dataclass
class MaskStats:
    """Pixel counts of one predicted/true mask pair.

    TP and TN are correctly classified shadow / non-shadow pixels; N_p and
    N_n are the shadow and non-shadow population sizes.
    """

    tp: int
    tn: int
    n_pos: int
    n_neg: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.n_pos, self.n_neg) < 0:
            raise MetricError("negative pixel count")
        if self.tp > self.n_pos or self.tn > self.n_neg:
            raise MetricError("true-positive/negative count exceeds class population")

    @property
    def total(self) -> int:
        return self.n_pos + self.n_neg

    @property
    def partial(self) -> bool:
        """True when one class is absent and BER excludes its ratio."""
        return self.n_pos == 0 or self.n_neg == 0

    def __add__(self, other: "MaskStats") -> "MaskStats":
        return MaskStats(self.tp + other.tp, self.tn + other.tn,
                         self.n_pos + other.n_pos, self.n_neg + other.n_neg)


def mask_stats(predicted: np.ndarray, truth: np.ndarray) -> MaskStats:
    """Count TP/TN/N_p/N_n for boolean masks (True = shadow)."""
    predicted = np.asarray(predicted, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if predicted.shape != truth.shape:
        raise MetricError(f"mask shapes differ: {predicted.shape} vs {truth.shape}")
    tp = int(np.count_nonzero(predicted & truth))
    tn = int(np.count_nonzero(~predicted & ~truth))
    n_pos = int(np.count_nonzero(truth))
    return MaskStats(tp, tn, n_pos, truth.size - n_pos)


def accuracy(stats: MaskStats) -> float:
    """(TP + TN) / (N_p + N_n)."""
    if stats.total == 0:
        raise MetricError("accuracy undefined on an empty image")
    return (stats.tp + stats.tn) / stats.total


def ber(stats: MaskStats) -> float:
    """Balance error rate, (1 - (TP/N_p + TN/N_n)/2) * 100; lower is better.

    When one class is empty its ratio is excluded from the mean and
    ``stats.partial`` is True.
    """
    ratios = []
    if stats.n_pos > 0:
        ratios.append(stats.tp / stats.n_pos)
    if stats.n_neg > 0:
        ratios.append(stats.tn / stats.n_neg)
    if not ratios:
        raise MetricError("BER undefined on an empty image")
    return (1.0 - sum(ratios) / len(ratios)) * 100.0


def rmse_lab(predicted: np.ndarray, truth: np.ndarray,
             region: np.ndarray | None = None) -> float:
    """Root mean squared per-channel difference between two LAB rasters.

    The mean runs over all pixels and channels of the region (whole image
    when region is None), so a unit offset on one of three channels gives
    RMSE 1/sqrt(3).
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if predicted.shape != truth.shape:
        raise MetricError(f"image shapes differ: {predicted.shape} vs {truth.shape}")
    diff = predicted - truth
    if region is not None:
        region = np.asarray(region, dtype=bool)
        if region.shape != predicted.shape[:-1]:
            raise MetricError(f"region shape {region.shape} does not match image")
        if not region.any():
            raise MetricError("empty region")
        diff = diff[region]
    return float(np.sqrt(np.mean(diff * diff)))
