"""Multi-scale shadow detection / removal network.

A small convolutional encoder (3x3 conv + ReLU per scale, 2x max-pool between
scales) replaces the heavyweight backbone; a DSC block augments each equipped
scale. The per-scale concatenations of convolutional and DSC features are
upsampled to input resolution, fused into multi-level integrated features
(MLIF) by a 1x1 convolution, and supervised: one 1x1 head per scale, one on
the MLIF, and a fusion head reading all predicted maps. At test time the
final output is the mean of the MLIF and fusion predictions.

The same schema covers the ablation variants: ``use_dsc=False`` gives the
plain multi-scale baseline and ``dsc_attention=False`` keeps the context
scans but drops the attention gating.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import checkpoint as ckpt
from .colorspace import lab_to_rgb, rgb_to_lab
from .colortransfer import fit_transfer, apply_transfer, TransferMatrix
from .dsc import DscConfig, DscModuleState, dsc_forward
from .losses import detection_loss_terms, removal_loss_terms, _combine
from .metrics import MaskStats, mask_stats, rmse_lab
from .optim import SGD, Adam
from .tensor import (Graph, Tensor, ShapeError, add, backward, concat_channels,
                     conv2d, maxpool2, relu, scale, sigmoid, upsample_bilinear)

TASKS = ("detect", "remove")


class TaskError(ValueError):
    """Operation applied to a network trained for the other task."""


@dataclass
class EncoderConfig:
    """Feature extractor shape: 3x3 kernels, factor-2 max-pool between scales."""

    scale_channels: tuple[int, ...] = (16, 32, 64, 64)

    def __post_init__(self):
        self.scale_channels = tuple(int(c) for c in self.scale_channels)
        if len(self.scale_channels) < 2:
            raise ValueError("need at least 2 scales (MLIF integrates multiple levels)")
        if any(c < 1 for c in self.scale_channels):
            raise ValueError("channel widths must be positive")


@dataclass
class NetworkConfig:
    task: str = "detect"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    dsc_scales: Optional[tuple[int, ...]] = None  # 1-based; default: all but scale 1
    dsc_rounds: int = 2
    dsc_share_attention: bool = True
    dsc_share_recurrent: bool = True
    dsc_attention: bool = True
    use_dsc: bool = True
    mlif_channels: int = 16
    color_space: str = "lab"  # removal regression space
    init_std: float = 0.1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.color_space not in ("lab", "rgb"):
            raise ValueError(f"color_space must be lab or rgb, got {self.color_space!r}")
        n = len(self.encoder.scale_channels)
        if self.dsc_scales is None:
            self.dsc_scales = tuple(range(2, n + 1))
        self.dsc_scales = tuple(sorted(int(s) for s in self.dsc_scales))
        if self.dsc_scales and not (1 <= self.dsc_scales[0] and self.dsc_scales[-1] <= n):
            raise ValueError(f"dsc_scales {self.dsc_scales} out of range for {n} scales")

    @property
    def out_channels(self) -> int:
        return 1 if self.task == "detect" else 3

    @property
    def n_scales(self) -> int:
        return len(self.encoder.scale_channels)


@dataclass
class Prediction:
    """All supervised output maps of one forward pass."""

    per_scale: list[Tensor]
    mlif: Tensor
    fusion: Tensor
    final: Tensor


class NetworkState:
    """The full learned parameter set, serializable as a DSCK checkpoint."""

    def __init__(self, config: NetworkConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng([seed, 0xD5C])
        std = config.init_std

        def p(shape):
            return Tensor(rng.normal(0.0, std, shape), requires_grad=True)

        def z(shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        chans = config.encoder.scale_channels
        self.enc_kernels: list[Tensor] = []
        self.enc_biases: list[Tensor] = []
        prev = 3
        for c in chans:
            self.enc_kernels.append(p((c, prev, 3, 3)))
            self.enc_biases.append(z(c))
            prev = c

        self.dsc: dict[int, DscModuleState] = {}
        if config.use_dsc:
            for s in config.dsc_scales:
                dcfg = DscConfig(channels_in=chans[s - 1],
                                 rounds=config.dsc_rounds,
                                 share_attention=config.dsc_share_attention,
                                 share_recurrent=config.dsc_share_recurrent,
                                 use_attention=config.dsc_attention)
                self.dsc[s] = DscModuleState.init(dcfg, rng, std)

        out = config.out_channels
        self.head_kernels: list[Tensor] = []
        self.head_biases: list[Tensor] = []
        for s, c in enumerate(chans, start=1):
            width = c + (self.dsc[s].config.channels_out if s in self.dsc else 0)
            self.head_kernels.append(p((out, width, 1, 1)))
            self.head_biases.append(z(out))

        cat_width = sum(c + (self.dsc[s].config.channels_out if s in self.dsc else 0)
                        for s, c in enumerate(chans, start=1))
        self.mlif_proj = p((config.mlif_channels, cat_width, 1, 1))
        self.mlif_proj_bias = z(config.mlif_channels)
        self.mlif_head = p((out, config.mlif_channels, 1, 1))
        self.mlif_head_bias = z(out)
        n_heads = len(chans) + 1
        self.fusion_kernel = p((out, out * n_heads, 1, 1))
        self.fusion_bias = z(out)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for i, (k, b) in enumerate(zip(self.enc_kernels, self.enc_biases), start=1):
            out += [(f"enc.{i}.kernel", k), (f"enc.{i}.bias", b)]
        for s in sorted(self.dsc):
            out += [(f"dsc.{s}.{n}", t) for n, t in self.dsc[s].named_parameters()]
        for i, (k, b) in enumerate(zip(self.head_kernels, self.head_biases), start=1):
            out += [(f"head.{i}.kernel", k), (f"head.{i}.bias", b)]
        out += [("mlif.proj", self.mlif_proj), ("mlif.proj_bias", self.mlif_proj_bias),
                ("mlif.head", self.mlif_head), ("mlif.head_bias", self.mlif_head_bias),
                ("fusion.kernel", self.fusion_kernel), ("fusion.bias", self.fusion_bias)]
        for name, t in out:
            t.name = name
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def save(self, path: str) -> None:
        ckpt.save_checkpoint(path, self.named_parameters())

    def load(self, path: str) -> None:
        """Load parameter values; names and shapes must match this architecture."""
        stored = ckpt.load_checkpoint(path)
        own = self.named_parameters()
        own_names = [n for n, _ in own]
        if list(stored) != own_names:
            missing = set(own_names) - set(stored)
            extra = set(stored) - set(own_names)
            raise ckpt.CheckpointError(
                f"{path}: parameter set mismatch (missing {sorted(missing)[:4]}, "
                f"unexpected {sorted(extra)[:4]})")
        for name, t in own:
            if stored[name].shape != t.data.shape:
                raise ckpt.CheckpointError(
                    f"{path}: tensor {name} has shape {stored[name].shape}, "
                    f"expected {t.data.shape}")
            t.data = stored[name]


def _activate(logit: Tensor, task: str) -> Tensor:
    return sigmoid(logit) if task == "detect" else logit


def forward(image: Tensor, state: NetworkState) -> Prediction:
    """Full forward pass on a (1,3,H,W) image tensor scaled to [0,1]."""
    cfg = state.config
    if image.data.ndim != 4 or image.shape[1] != 3:
        raise ShapeError(f"forward: expected (B,3,H,W) image, got {image.shape}")
    h, w = image.shape[2], image.shape[3]
    factor = 2 ** (cfg.n_scales - 1)
    if h % factor or w % factor:
        raise ShapeError(f"forward: {h}x{w} input not divisible by {factor}")

    feats = []
    cur = image
    for i, (k, b) in enumerate(zip(state.enc_kernels, state.enc_biases)):
        if i > 0:
            cur = maxpool2(cur)
        cur = relu(conv2d(cur, k, b, padding=1))
        feats.append(cur)

    upsampled = []
    for s, f in enumerate(feats, start=1):
        cat = concat_channels([f, dsc_forward(f, state.dsc[s])]) if s in state.dsc else f
        if cat.shape[2] != h or cat.shape[3] != w:
            cat = upsample_bilinear(cat, (h, w))
        upsampled.append(cat)

    task = cfg.task
    scale_preds = [
        _activate(conv2d(u, k, b), task)
        for u, k, b in zip(upsampled, state.head_kernels, state.head_biases)
    ]
    mlif_feat = relu(conv2d(concat_channels(upsampled), state.mlif_proj,
                            state.mlif_proj_bias))
    mlif_pred = _activate(conv2d(mlif_feat, state.mlif_head, state.mlif_head_bias), task)
    fusion_in = concat_channels(scale_preds + [mlif_pred])
    fusion_pred = _activate(conv2d(fusion_in, state.fusion_kernel, state.fusion_bias),
                            task)
    final = scale(add(mlif_pred, fusion_pred), 0.5)
    if not np.isfinite(final.data).all():
        raise FloatingPointError("forward pass produced non-finite values")
    return Prediction(scale_preds, mlif_pred, fusion_pred, final)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    iterations: int = 2000
    lr: float = 0.05
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.99
    weight_decay: float = 5e-4
    accum_steps: int = 1
    lr_milestones: tuple[int, ...] = ()
    lr_factor: float = 0.316
    seed: int = 0


def image_tensor(rgb: np.ndarray) -> Tensor:
    """(H,W,3) raster in [0,255] -> (1,3,H,W) network input in [0,1]."""
    arr = np.asarray(rgb, dtype=np.float64).transpose(2, 0, 1)[None] / 255.0
    return Tensor(arr)


def mask_tensor(mask: np.ndarray) -> Tensor:
    return Tensor(np.asarray(mask, dtype=np.float64)[None, None])


def _target_tensor(rgb: np.ndarray, color_space: str) -> Tensor:
    raster = rgb_to_lab(rgb) if color_space == "lab" else np.asarray(rgb, np.float64)
    return Tensor(raster.transpose(2, 0, 1)[None])


def _epoch_order(rng: np.random.Generator, n: int, iterations: int) -> np.ndarray:
    reps = int(np.ceil(iterations / n))
    return np.concatenate([rng.permutation(n) for _ in range(reps)])[:iterations]


def train_detection(dataset: list, state: NetworkState,
                    tc: TrainConfig) -> list[list[float]]:
    """SGD+momentum training on the summed per-head detection loss.

    Returns the loss trace, one row per iteration:
    [iteration, total, scale losses..., mlif, fusion]. Deterministic under a
    fixed seed; the network state is updated in place.
    """
    if not dataset:
        raise ValueError("train_detection: empty dataset")
    if state.config.task != "detect":
        raise TaskError("train_detection needs a detection-task network")
    rng = np.random.default_rng([tc.seed, 1])
    order = _epoch_order(rng, len(dataset), tc.iterations)
    inputs = [(image_tensor(s.shadow_image), mask_tensor(s.mask)) for s in dataset]
    opt = SGD(state.parameters(), tc.lr, tc.momentum, tc.weight_decay)
    trace = []
    for it in range(1, tc.iterations + 1):
        x, y = inputs[order[it - 1]]
        with Graph() as g:
            pred = forward(x, state)
            terms = detection_loss_terms(pred, y)
            total = _combine(terms, [1.0] * len(terms))
        backward(g, total)
        if it % tc.accum_steps == 0:
            opt.step()
            opt.zero_grad()
        if it in tc.lr_milestones:
            opt.lr *= tc.lr_factor
        trace.append([float(it), total.item()] + [t.item() for t in terms])
    return trace


def prepare_removal_targets(dataset: list, use_color_transfer: bool
                            ) -> tuple[list[np.ndarray], dict[str, TransferMatrix]]:
    """Per-scene regression targets in RGB: the shadow-free image, color
    compensated toward the shadow image over the non-shadow region when
    requested."""
    targets, transfers = [], {}
    for s in dataset:
        if s.shadow_free is None:
            raise ValueError(f"scene {s.id}: removal training needs shadow-free images")
        if use_color_transfer:
            t = fit_transfer(s.shadow_image, s.shadow_free, ~s.mask)
            transfers[s.id] = t
            targets.append(apply_transfer(s.shadow_free, t))
        else:
            targets.append(np.asarray(s.shadow_free, dtype=np.float64))
    return targets, transfers


def train_removal(dataset: list, state: NetworkState, tc: TrainConfig,
                  use_color_transfer: bool = False
                  ) -> tuple[list[list[float]], dict[str, TransferMatrix]]:
    """Adam training on the summed per-head squared-error loss.

    Targets are the shadow-free images (color-compensated per pair when
    ``use_color_transfer``), regressed in the configured color space. The
    learning rate is multiplied by ``lr_factor`` at each milestone.
    """
    if not dataset:
        raise ValueError("train_removal: empty dataset")
    if state.config.task != "remove":
        raise TaskError("train_removal needs a removal-task network")
    target_rgb, transfers = prepare_removal_targets(dataset, use_color_transfer)
    rng = np.random.default_rng([tc.seed, 1])
    order = _epoch_order(rng, len(dataset), tc.iterations)
    inputs = [(image_tensor(s.shadow_image),
               _target_tensor(t, state.config.color_space))
              for s, t in zip(dataset, target_rgb)]
    opt = Adam(state.parameters(), tc.lr, tc.beta1, tc.beta2, tc.weight_decay)
    trace = []
    for it in range(1, tc.iterations + 1):
        x, target = inputs[order[it - 1]]
        with Graph() as g:
            pred = forward(x, state)
            terms = removal_loss_terms(pred, target)
            total = _combine(terms, [1.0] * len(terms))
        backward(g, total)
        if it % tc.accum_steps == 0:
            opt.step()
            opt.zero_grad()
        if it in tc.lr_milestones:
            opt.lr *= tc.lr_factor
        trace.append([float(it), total.item()] + [t.item() for t in terms])
    return trace, transfers


# ---------------------------------------------------------------------------
# prediction and evaluation


def predict_mask(rgb: np.ndarray, state: NetworkState) -> tuple[np.ndarray, np.ndarray]:
    """Soft shadow map and its 0.5-threshold binarization (>= 0.5 is shadow)."""
    if state.config.task != "detect":
        raise TaskError("predict_mask needs a detection-task network")
    pred = forward(image_tensor(rgb), state)
    soft = pred.final.data[0, 0]
    return soft >= 0.5, soft


def predict_shadow_free(rgb: np.ndarray, state: NetworkState
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Predicted shadow-free image as (LAB raster, clamped RGB raster)."""
    if state.config.task != "remove":
        raise TaskError("predict_shadow_free needs a removal-task network")
    pred = forward(image_tensor(rgb), state)
    out = pred.final.data[0].transpose(1, 2, 0)
    if state.config.color_space == "lab":
        return out, lab_to_rgb(out)
    rgb_out = np.clip(out, 0.0, 255.0)
    return rgb_to_lab(rgb_out), rgb_out


def _eval_pool():
    workers = int(os.environ.get("DSC_THREADS", "1"))
    return ThreadPoolExecutor(max_workers=max(1, workers))


def evaluate_detection(state: NetworkState, dataset: list
                       ) -> tuple[list[tuple[str, MaskStats]], MaskStats]:
    """Per-scene mask statistics plus the pooled counts over the dataset."""
    def one(scene):
        binary, _ = predict_mask(scene.shadow_image, state)
        return scene.id, mask_stats(binary, scene.mask)

    with _eval_pool() as pool:
        rows = list(pool.map(one, dataset))
    pooled = MaskStats(0, 0, 0, 0)
    for _, st in rows:
        pooled = pooled + st
    return rows, pooled


def evaluate_removal(state: NetworkState, dataset: list, target: str = "free"
                     ) -> list[tuple[str, float, float, float]]:
    """Per-scene LAB RMSE rows (whole image, shadow region, non-shadow region).

    ``target`` selects the reference image: the stored shadow-free image
    ("free") or its per-pair color-compensated version ("transferred").
    """
    if target not in ("free", "transferred"):
        raise ValueError(f"target must be free or transferred, got {target!r}")

    def one(scene):
        if scene.shadow_free is None:
            raise ValueError(f"scene {scene.id}: no shadow-free reference")
        ref = np.asarray(scene.shadow_free, dtype=np.float64)
        if target == "transferred":
            t = fit_transfer(scene.shadow_image, scene.shadow_free, ~scene.mask)
            ref = apply_transfer(ref, t)
        ref_lab = rgb_to_lab(ref)
        pred_lab, _ = predict_shadow_free(scene.shadow_image, state)
        shadow = scene.mask.astype(bool)
        return (scene.id,
                rmse_lab(pred_lab, ref_lab),
                rmse_lab(pred_lab, ref_lab, shadow) if shadow.any() else float("nan"),
                rmse_lab(pred_lab, ref_lab, ~shadow) if (~shadow).any() else float("nan"))

    with _eval_pool() as pool:
        return list(pool.map(one, dataset))


def baseline_removal_rmse(dataset: list) -> float:
    """Whole-image LAB RMSE of the do-nothing remover (input vs. reference),
    averaged over scenes."""
    vals = [rmse_lab(rgb_to_lab(s.shadow_image), rgb_to_lab(s.shadow_free))
            for s in dataset]
    return float(np.mean(vals))


def make_state(config: NetworkConfig, seed: int = 0) -> NetworkState:
    return NetworkState(config, seed)


def config_variant(config: NetworkConfig, variant: str) -> NetworkConfig:
    """Ablation rows: "dsc" (full), "context" (no attention), "basic" (no DSC)."""
    if variant == "dsc":
        return replace(config, use_dsc=True, dsc_attention=True)
    if variant == "context":
        return replace(config, use_dsc=True, dsc_attention=False)
    if variant == "basic":
        return replace(config, use_dsc=False)
    raise ValueError(f"unknown variant {variant!r}")
