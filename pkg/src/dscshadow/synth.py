"""Synthetic shadow scenes: deterministic desk-scale stand-in for benchmark data.

Each scene is a textured background (flat, gradient or checker), a random
shadow shape (rectangle, ellipse or triangle) darkened multiplicatively in
linear RGB with a soft edge ramp, and the matching shadow-free image. With
perturbation enabled the stored shadow-free copy is additionally passed
through a planted affine color map, simulating the exposure and luminosity
drift between real capture pairs; the planted matrix is recorded in the
manifest so recovery can be verified.

All randomness derives from (seed, scene index); regenerating a dataset from
its manifest reproduces the files byte for byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .imageio import read_mask, read_ppm, write_mask, write_ppm, _atomic_write

BACKGROUNDS = ("flat", "gradient", "checker")
SHAPES = ("rectangle", "ellipse", "polygon")


@dataclass
class LabeledScene:
    """One training/eval sample; rasters share dimensions, mask is binary."""

    id: str
    shadow_image: np.ndarray        # (H,W,3) uint8
    mask: np.ndarray                # (H,W) bool, True = shadow
    shadow_free: Optional[np.ndarray] = None  # (H,W,3) uint8

    def __post_init__(self):
        hw = self.shadow_image.shape[:2]
        if self.mask.shape != hw:
            raise ValueError(f"scene {self.id}: mask {self.mask.shape} vs image {hw}")
        if self.shadow_free is not None and self.shadow_free.shape[:2] != hw:
            raise ValueError(f"scene {self.id}: shadow-free raster shape mismatch")
        if self.mask.dtype != bool:
            raise ValueError(f"scene {self.id}: mask must be boolean")


@dataclass
class SynthConfig:
    resolution: tuple[int, int] = (64, 64)
    count: int = 200
    shapes: tuple[str, ...] = SHAPES
    backgrounds: tuple[str, ...] = BACKGROUNDS
    attenuation: tuple[float, float] = (0.3, 0.7)
    soft_edge: float = 2.0
    perturb: bool = False
    perturb_gain: tuple[float, float] = (0.9, 1.1)
    perturb_offdiag: float = 0.02
    perturb_bias: float = 8.0
    seed: int = 7
    # shadow must occupy this fraction range so both classes always exist
    area_range: tuple[float, float] = (0.06, 0.55)

    def __post_init__(self):
        self.resolution = (int(self.resolution[0]), int(self.resolution[1]))
        self.shapes = tuple(self.shapes)
        self.backgrounds = tuple(self.backgrounds)
        if not (0.0 < self.attenuation[0] <= self.attenuation[1] <= 1.0):
            raise ValueError(f"attenuation range {self.attenuation} outside (0,1]")
        for s in self.shapes:
            if s not in SHAPES:
                raise ValueError(f"unknown shape family {s!r}")
        for b in self.backgrounds:
            if b not in BACKGROUNDS:
                raise ValueError(f"unknown background family {b!r}")


def _srgb_to_linear(c):
    return np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c > 0.0031308, 1.055 * c ** (1.0 / 2.4) - 0.055, 12.92 * c)


def _background(kind: str, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    if kind == "flat":
        img = np.broadcast_to(rng.uniform(60, 200, 3), (h, w, 3)).copy()
    elif kind == "gradient":
        c0, c1 = rng.uniform(45, 210, (2, 3))
        theta = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        t = xx * np.cos(theta) + yy * np.sin(theta)
        t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
        img = c0 + t[..., None] * (c1 - c0)
    else:  # checker
        c0, c1 = rng.uniform(45, 210, (2, 3))
        cell = int(rng.integers(4, 17))
        yy, xx = np.mgrid[0:h, 0:w]
        tile = ((yy // cell + xx // cell) % 2).astype(np.float64)
        img = c0 + tile[..., None] * (c1 - c0)
    # light per-pixel dither: keeps the non-shadow colors full rank so the
    # per-pair transfer fit is well posed on every background family
    return img + rng.uniform(-3.0, 3.0, size=(h, w, 3))


def _shape_distance(kind: str, rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Signed distance to the shadow boundary in pixels, negative inside."""
    yy, xx = np.mgrid[0:h, 0:w]
    cx = rng.uniform(0.25 * w, 0.75 * w)
    cy = rng.uniform(0.25 * h, 0.75 * h)
    if kind == "rectangle":
        hx = rng.uniform(0.1, 0.35) * w
        hy = rng.uniform(0.1, 0.35) * h
        return np.maximum(np.abs(xx - cx) - hx, np.abs(yy - cy) - hy)
    if kind == "ellipse":
        rx = rng.uniform(0.12, 0.38) * w
        ry = rng.uniform(0.12, 0.38) * h
        r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
        return (r - 1.0) * min(rx, ry)
    # polygon: a random triangle; inside = negative on all edge half-planes
    ang = np.sort(rng.uniform(0, 2 * np.pi, 3))
    rad = rng.uniform(0.15, 0.4, 3) * min(h, w)
    px = cx + rad * np.cos(ang)
    py = cy + rad * np.sin(ang)
    d = np.full((h, w), -np.inf)
    for i in range(3):
        ex, ey = px[(i + 1) % 3] - px[i], py[(i + 1) % 3] - py[i]
        norm = np.hypot(ex, ey)
        # outward normal for counter-clockwise order (angles are sorted asc,
        # image y grows downward, so the loop is clockwise on screen)
        dist = ((xx - px[i]) * ey - (yy - py[i]) * ex) / max(norm, 1e-9)
        d = np.maximum(d, dist)
    return d


def _planted_affine(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    # ranges are chosen so the mapped background colors stay inside [0,255];
    # clipping would break the affine relation the transfer fit recovers
    while True:
        lin = np.diag(rng.uniform(*cfg.perturb_gain, 3))
        off = rng.uniform(-cfg.perturb_offdiag, cfg.perturb_offdiag, (3, 3))
        np.fill_diagonal(off, 0.0)
        lin = lin + off
        if abs(np.linalg.det(lin)) >= 0.3:
            bias = rng.uniform(-cfg.perturb_bias, cfg.perturb_bias, 3)
            return np.hstack([lin, bias[:, None]])


def generate_scene(cfg: SynthConfig, index: int
                   ) -> tuple[LabeledScene, dict]:
    """Deterministically build scene ``index``; also returns manifest metadata."""
    rng = np.random.default_rng([cfg.seed, index])
    h, w = cfg.resolution
    background = str(rng.choice(cfg.backgrounds))
    base = np.clip(np.rint(_background(background, rng, h, w)), 0, 255).astype(np.uint8)

    shape = str(rng.choice(cfg.shapes))
    for _ in range(64):
        dist = _shape_distance(shape, rng, h, w)
        mask = dist <= 0.0
        frac = mask.mean()
        if cfg.area_range[0] <= frac <= cfg.area_range[1]:
            break
    else:
        raise RuntimeError(f"scene {index}: no admissible shadow shape found")

    if cfg.soft_edge > 0:
        coverage = np.clip(0.5 - dist / cfg.soft_edge, 0.0, 1.0)
    else:
        coverage = mask.astype(np.float64)
    attenuation = float(rng.uniform(*cfg.attenuation))
    lin = _srgb_to_linear(base / 255.0)
    lin = lin * (1.0 - (1.0 - attenuation) * coverage)[..., None]
    shadow = np.clip(np.rint(_linear_to_srgb(lin) * 255.0), 0, 255).astype(np.uint8)

    planted = None
    free = base
    if cfg.perturb:
        planted = _planted_affine(rng, cfg)
        mapped = base.astype(np.float64) @ planted[:, :3].T + planted[:, 3]
        free = np.clip(np.rint(mapped), 0, 255).astype(np.uint8)

    scene = LabeledScene(f"scene_{index:04d}", shadow, mask, free)
    meta = {
        "id": scene.id,
        "background": background,
        "shape": shape,
        "attenuation": round(attenuation, 6),
        "perturb": planted.tolist() if planted is not None else None,
    }
    return scene, meta


def write_dataset(cfg: SynthConfig, out_dir: str) -> list[str]:
    """Emit count scenes as {id}_shadow.ppm / {id}_mask.pgm / {id}_free.ppm
    plus manifest.json. Returns the scene ids."""
    os.makedirs(out_dir, exist_ok=True)
    metas = []
    for i in range(cfg.count):
        scene, meta = generate_scene(cfg, i)
        write_ppm(os.path.join(out_dir, f"{scene.id}_shadow.ppm"), scene.shadow_image)
        write_mask(os.path.join(out_dir, f"{scene.id}_mask.pgm"), scene.mask)
        write_ppm(os.path.join(out_dir, f"{scene.id}_free.ppm"), scene.shadow_free)
        metas.append(meta)
    manifest = {
        "format": "dscshadow-synth",
        "version": 1,
        "resolution": list(cfg.resolution),
        "count": cfg.count,
        "seed": cfg.seed,
        "soft_edge": cfg.soft_edge,
        "attenuation": list(cfg.attenuation),
        "perturb": cfg.perturb,
        "scenes": metas,
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2).encode())
    return [m["id"] for m in metas]


def load_manifest(dataset_dir: str) -> dict:
    path = os.path.join(dataset_dir, "manifest.json")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def load_dataset(dataset_dir: str) -> list[LabeledScene]:
    """Load every scene named by the manifest; enforces LabeledScene invariants."""
    manifest = load_manifest(dataset_dir)
    scenes = []
    for meta in manifest["scenes"]:
        sid = meta["id"]
        shadow = read_ppm(os.path.join(dataset_dir, f"{sid}_shadow.ppm"))
        mask = read_mask(os.path.join(dataset_dir, f"{sid}_mask.pgm"))
        free_path = os.path.join(dataset_dir, f"{sid}_free.ppm")
        free = read_ppm(free_path) if os.path.exists(free_path) else None
        scenes.append(LabeledScene(sid, shadow, mask, free))
    return scenes
