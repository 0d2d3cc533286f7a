"""Training losses: balanced cross entropies for detection, MSE for removal.

The two cross-entropy variants re-weight the shadow / non-shadow terms per
image: one by class population, one by per-class accuracy of the current
prediction (hard-class emphasis). Both are recorded as single tape nodes with
an analytic gradient in which the weights are treated as constants; the
accuracy weights come from thresholding the prediction at 0.5 and are
recomputed every call.

All pixel losses are averaged (not summed) over pixels so magnitudes are
resolution independent. Probabilities are clamped to [1e-7, 1 - 1e-7] before
the logs; gradients keep the clamped value in the denominator so saturated
predictions still receive a bounded push back toward the target.
"""

from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, ShapeError, _record, _scalar, add, scale

logger = logging.getLogger("dscshadow")

PROB_EPS = 1e-7


def _check_pair(p: Tensor, y: Tensor, name: str):
    if p.shape != y.shape:
        raise ShapeError(f"{name}: prediction {p.shape} vs mask {y.shape}")


def _weighted_ce(p: Tensor, y: Tensor, w_pos: float, w_neg: float) -> Tensor:
    yd = y.data
    pc = np.clip(p.data, PROB_EPS, 1.0 - PROB_EPS)
    n = pc.size
    per_pixel = -(w_pos * yd * np.log(pc) + w_neg * (1.0 - yd) * np.log1p(-pc))
    out = np.asarray(per_pixel.mean())

    def bw(g):
        # denominators use the clamped value, so pixels saturated on the
        # wrong side keep a (bounded, once chained through the sigmoid)
        # recovery gradient instead of going silent
        gp = (-w_pos * yd / pc + w_neg * (1.0 - yd) / (1.0 - pc)) / n
        return gp * _scalar(g), None

    return _record((p, y), out, bw)


def weighted_ce_class(p: Tensor, y: Tensor) -> Tensor:
    """Cross entropy weighted by class distribution.

    Shadow pixels carry weight N_n/(N_p+N_n) and non-shadow pixels
    N_p/(N_p+N_n), so the minority class dominates the loss. A single-class
    image zeroes the surviving term's weight, giving loss 0.
    """
    _check_pair(p, y, "weighted_ce_class")
    n_pos = float(y.data.sum())
    n_neg = y.data.size - n_pos
    if n_pos == 0 or n_neg == 0:
        logger.warning("weighted_ce_class: single-class mask, loss degenerates to 0")
    total = y.data.size
    return _weighted_ce(p, y, n_neg / total, n_pos / total)


def weighted_ce_accuracy(p: Tensor, y: Tensor) -> Tensor:
    """Cross entropy weighted by per-class error rate of the current prediction.

    The shadow term is weighted by 1 - TP/N_p and the non-shadow term by
    1 - TN/N_n, where TP/TN come from thresholding p at 0.5 (ties count as
    shadow). An absent class is treated as perfectly classified (weight 0).
    """
    _check_pair(p, y, "weighted_ce_accuracy")
    yb = y.data >= 0.5
    pb = p.data >= 0.5
    n_pos = int(np.count_nonzero(yb))
    n_neg = yb.size - n_pos
    tp_rate = (np.count_nonzero(pb & yb) / n_pos) if n_pos else 1.0
    tn_rate = (np.count_nonzero(~pb & ~yb) / n_neg) if n_neg else 1.0
    if n_pos == 0 or n_neg == 0:
        logger.warning("weighted_ce_accuracy: single-class mask, its term is dropped")
    return _weighted_ce(p, y, 1.0 - tp_rate, 1.0 - tn_rate)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared difference over all pixels and channels."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = np.asarray((diff * diff).mean())

    def bw(g):
        gd = (2.0 / n) * diff * _scalar(g)
        return gd, -gd

    return _record((pred, target), out, bw)


def _combine(terms: Sequence[Tensor], weights: Sequence[float]) -> Tensor:
    total: Optional[Tensor] = None
    for t, w in zip(terms, weights):
        piece = t if w == 1.0 else scale(t, w)
        total = piece if total is None else add(total, piece)
    assert total is not None
    return total


def detection_loss_terms(prediction, y: Tensor) -> list[Tensor]:
    """Per-head detection losses (class CE + accuracy CE), scales first, then
    MLIF and fusion."""
    heads = list(prediction.per_scale) + [prediction.mlif, prediction.fusion]
    return [add(weighted_ce_class(h, y), weighted_ce_accuracy(h, y)) for h in heads]


def detection_loss(prediction, y: Tensor,
                   scale_weights: Optional[Sequence[float]] = None,
                   mlif_weight: float = 1.0, fusion_weight: float = 1.0) -> Tensor:
    """Overall detection loss: weighted sum of all supervised heads (unit
    weights by default)."""
    terms = detection_loss_terms(prediction, y)
    n_scales = len(terms) - 2
    sw = list(scale_weights) if scale_weights is not None else [1.0] * n_scales
    if len(sw) != n_scales:
        raise ShapeError(f"detection_loss: {len(sw)} weights for {n_scales} scales")
    return _combine(terms, sw + [mlif_weight, fusion_weight])


def removal_loss_terms(prediction, target: Tensor) -> list[Tensor]:
    """Per-head squared-error losses against the (LAB) target image."""
    heads = list(prediction.per_scale) + [prediction.mlif, prediction.fusion]
    return [mse_loss(h, target) for h in heads]


def removal_loss(prediction, target: Tensor,
                 scale_weights: Optional[Sequence[float]] = None,
                 mlif_weight: float = 1.0, fusion_weight: float = 1.0) -> Tensor:
    """Overall removal loss: weighted sum of per-head MSE terms."""
    terms = removal_loss_terms(prediction, target)
    n_scales = len(terms) - 2
    sw = list(scale_weights) if scale_weights is not None else [1.0] * n_scales
    if len(sw) != n_scales:
        raise ShapeError(f"removal_loss: {len(sw)} weights for {n_scales} scales")
    return _combine(terms, sw + [mlif_weight, fusion_weight])
