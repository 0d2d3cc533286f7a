"""Direction-aware spatial context block.

The block aggregates image context with recurrent scans in the four principal
directions (identity-initialized channel-mixing recurrence, ReLU at every
step), gates each direction's context with a learned single-channel attention
map, concatenates the four gated maps, and projects back down with 1x1
convolutions. Running two rounds of scans lets every pixel see the whole
image; attention weights (and optionally the recurrence matrices) can be
shared between rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .tensor import (Tensor, ShapeError, _record, channel_slice, concat_channels,
                     conv2d, elementwise_mul_broadcast, relu)

DIRECTIONS = ("left", "down", "right", "up")


@dataclass
class DscConfig:
    """Hyperparameters of one DSC block.

    ``reduce_factor`` controls the 1x1 projection after each intermediate
    round (concatenated width 4C shrinks by this factor); with two or more
    rounds it must be 4 so the width returns to C and the recurrence matrices
    stay square.
    """

    channels_in: int
    channels_out: Optional[int] = None
    rounds: int = 2
    share_attention: bool = True
    share_recurrent: bool = True
    use_attention: bool = True
    reduce_factor: int = 4

    def __post_init__(self):
        if self.channels_in < 1:
            raise ValueError("channels_in must be positive")
        if self.channels_out is None:
            self.channels_out = self.channels_in
        if self.rounds not in (1, 2, 3):
            raise ValueError(f"rounds must be 1, 2 or 3, got {self.rounds}")
        if self.reduce_factor < 1 or (4 * self.channels_in) % self.reduce_factor:
            raise ValueError(
                f"concat width {4 * self.channels_in} not divisible by {self.reduce_factor}")
        if self.rounds >= 2 and (4 * self.channels_in) // self.reduce_factor != self.channels_in:
            raise ValueError("multi-round blocks need reduce_factor 4 to keep the width fixed")


@dataclass
class DirectionalWeights:
    """Per-direction recurrent translation matrices (C x C), identity at init."""

    left: Tensor
    down: Tensor
    right: Tensor
    up: Tensor

    @classmethod
    def identity(cls, channels: int) -> "DirectionalWeights":
        return cls(*(Tensor(np.eye(channels), requires_grad=True) for _ in DIRECTIONS))

    def get(self, direction: str) -> Tensor:
        return getattr(self, direction)


@dataclass
class AttentionEstimator:
    """Three-layer conv net producing the 4-channel attention map."""

    conv1: Tensor
    bias1: Tensor
    conv2: Tensor
    bias2: Tensor
    conv3: Tensor
    bias3: Tensor

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator,
             init_std: float = 0.1) -> "AttentionEstimator":
        def p(shape):
            return Tensor(rng.normal(0.0, init_std, shape), requires_grad=True)

        def z(shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        return cls(p((channels, channels, 3, 3)), z(channels),
                   p((channels, channels, 3, 3)), z(channels),
                   p((4, channels, 1, 1)), z(4))


@dataclass
class DscModuleState:
    """All learned parameters of one DSC block."""

    config: DscConfig
    input_proj: Tensor
    dir_weights: list[DirectionalWeights]
    attention: list[AttentionEstimator] = field(default_factory=list)
    round_proj: Optional[Tensor] = None
    output_proj: Tensor = None  # type: ignore[assignment]

    @classmethod
    def init(cls, config: DscConfig, rng: np.random.Generator,
             init_std: float = 0.1) -> "DscModuleState":
        c = config.channels_in

        def p(shape):
            return Tensor(rng.normal(0.0, init_std, shape), requires_grad=True)

        input_proj = p((c, c, 1, 1))
        n_dir = 1 if config.share_recurrent else config.rounds
        dir_weights = [DirectionalWeights.identity(c) for _ in range(n_dir)]
        attention = []
        if config.use_attention:
            n_att = 1 if config.share_attention else config.rounds
            attention = [AttentionEstimator.init(c, rng, init_std) for _ in range(n_att)]
        round_proj = p((c, 4 * c, 1, 1)) if config.rounds >= 2 else None
        output_proj = p((config.channels_out, 4 * c, 1, 1))
        return cls(config, input_proj, dir_weights, attention, round_proj, output_proj)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = [("input_proj", self.input_proj)]
        for r, dw in enumerate(self.dir_weights):
            for d in DIRECTIONS:
                out.append((f"alpha{r}.{d}", dw.get(d)))
        for r, est in enumerate(self.attention):
            for nm in ("conv1", "bias1", "conv2", "bias2", "conv3", "bias3"):
                out.append((f"att{r}.{nm}", getattr(est, nm)))
        if self.round_proj is not None:
            out.append(("round_proj", self.round_proj))
        out.append(("output_proj", self.output_proj))
        return out


def _to_scan(a: np.ndarray, direction: str) -> np.ndarray:
    # map each direction onto the kernels' canonical left-to-right scan
    if direction == "right":
        out = a
    elif direction == "left":
        out = a[:, :, :, ::-1]
    elif direction == "down":
        out = a.transpose(0, 1, 3, 2)
    elif direction == "up":
        out = a.transpose(0, 1, 3, 2)[:, :, :, ::-1]
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return np.ascontiguousarray(out)


def _from_scan(a: np.ndarray, direction: str) -> np.ndarray:
    if direction == "right":
        out = a
    elif direction == "left":
        out = a[:, :, :, ::-1]
    elif direction == "down":
        out = a.transpose(0, 1, 3, 2)
    else:  # up
        out = a[:, :, :, ::-1].transpose(0, 1, 3, 2)
    return np.ascontiguousarray(out)


def translate_direction(features: Tensor, alpha: Tensor, direction: str) -> Tensor:
    """One round of recurrent data translation along a principal direction.

    Walking the direction's axis, each pixel's feature vector becomes
    max(alpha @ previous + current, 0), with a zero vector before the first
    pixel. The backward pass differentiates through the entire scan.
    """
    if features.data.ndim != 4:
        raise ShapeError("translate_direction: expected a 4-D tensor")
    c = features.shape[1]
    if alpha.shape != (c, c):
        raise ShapeError(f"translate_direction: alpha {alpha.shape} != ({c},{c})")
    xt = _to_scan(features.data, direction)
    ht = kernels.scan_forward(xt, alpha.data)
    out = _from_scan(ht, direction)

    def bw(g):
        gt = _to_scan(g, direction)
        gx, galpha = kernels.scan_backward(xt, ht, alpha.data, gt)
        return _from_scan(gx, direction), galpha

    return _record((features, alpha), out, bw)


def estimate_attention(features: Tensor, estimator: AttentionEstimator) -> tuple:
    """Predict the four attention maps (left, down, right, up) from features.

    conv3x3 -> ReLU -> conv3x3 -> ReLU -> conv1x1 to 4 channels, split by
    channel. The maps are raw linear outputs, no squashing.
    """
    h = relu(conv2d(features, estimator.conv1, estimator.bias1, padding=1))
    h = relu(conv2d(h, estimator.conv2, estimator.bias2, padding=1))
    w = conv2d(h, estimator.conv3, estimator.bias3, padding=0)
    return tuple(channel_slice(w, i, i + 1) for i in range(4))


def dsc_forward(features: Tensor, state: DscModuleState) -> Tensor:
    """Run the DSC block: project, scan/gate/concat per round, project out."""
    cfg = state.config
    if features.shape[1] != cfg.channels_in:
        raise ShapeError(
            f"dsc_forward: {features.shape[1]} input channels, expected {cfg.channels_in}")
    x = conv2d(features, state.input_proj)
    maps = estimate_attention(x, state.attention[0]) if cfg.use_attention else None
    h = x
    for r in range(cfg.rounds):
        if cfg.use_attention and not cfg.share_attention and r > 0:
            maps = estimate_attention(h, state.attention[r])
        dw = state.dir_weights[0] if cfg.share_recurrent else state.dir_weights[r]
        parts = []
        for i, d in enumerate(DIRECTIONS):
            ctx = translate_direction(h, dw.get(d), d)
            parts.append(elementwise_mul_broadcast(ctx, maps[i]) if maps else ctx)
        cat = concat_channels(parts)
        if r < cfg.rounds - 1:
            h = conv2d(cat, state.round_proj)
        else:
            return relu(conv2d(cat, state.output_proj))
    raise AssertionError("unreachable")
