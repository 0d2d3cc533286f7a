"""sRGB <-> CIE L*a*b* conversion (D65, 2 degree observer).

Input RGB rasters are 8-bit-scaled values in [0, 255], shaped (..., 3).
L lands in [0, 100]; a and b are unbounded in principle, roughly [-128, 127]
for in-gamut colors. The inverse transform clamps back to the sRGB gamut.
"""

from __future__ import annotations

import numpy as np

# D65 reference white, XYZ scaled so Yn = 100.
WHITE_X = 95.047
WHITE_Y = 100.0
WHITE_Z = 108.883

_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)

_EPS = (6.0 / 29.0) ** 3
_KAPPA_SLOPE = (29.0 / 6.0) ** 2 / 3.0  # slope of the linear segment of f


def _srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)


def _linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, None)
    return np.where(c > 0.0031308, 1.055 * c ** (1.0 / 2.4) - 0.055, 12.92 * c)


def _f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPS, np.cbrt(t), _KAPPA_SLOPE * t + 4.0 / 29.0)


def _f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > 6.0 / 29.0, t ** 3, (t - 4.0 / 29.0) / _KAPPA_SLOPE)


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert an sRGB raster in [0,255], shape (...,3), to L*a*b* float64."""
    rgb = np.asarray(rgb, dtype=np.float64)
    lin = _srgb_to_linear(rgb / 255.0) * 100.0
    xyz = lin @ _RGB_TO_XYZ.T
    fx = _f(xyz[..., 0] / WHITE_X)
    fy = _f(xyz[..., 1] / WHITE_Y)
    fz = _f(xyz[..., 2] / WHITE_Z)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """Convert L*a*b* back to sRGB in [0,255], clamped to the gamut."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = np.stack([_f_inv(fx) * WHITE_X, _f_inv(fy) * WHITE_Y, _f_inv(fz) * WHITE_Z],
                   axis=-1)
    lin = xyz @ _XYZ_TO_RGB.T
    return np.clip(_linear_to_srgb(lin / 100.0) * 255.0, 0.0, 255.0)
