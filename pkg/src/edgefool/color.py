"""sRGB <-> CIE Lab conversion with analytic backward passes.

D65 white point, 2-degree observer, sRGB gamma per IEC 61966-2-1. Images are
(H, W, 3) float64 arrays; sRGB values live in [0, 1], L in [0, 100]. At the
exact piecewise cusps (gamma knee, cube-root knee) derivatives take the
linear branch. Out-of-range sRGB inputs are clamped and counted rather than
rejected, since attack iterates can transiently leave the gamut.
"""

from __future__ import annotations

import numpy as np

# linear RGB -> XYZ for sRGB primaries, D65 (and its inverse)
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = _RGB2XYZ.sum(axis=1)  # XYZ of sRGB white (0.95047, 1.0, 1.08883)

_GAMMA_KNEE = 0.04045
_LINEAR_KNEE = 0.0031308
_DELTA = 6.0 / 29.0
_DELTA3 = _DELTA ** 3
_KAPPA = 1.0 / (3.0 * _DELTA ** 2)  # slope of the linear f-branch

_clamp_warnings = 0


def clamp_warning_count() -> int:
    """Number of rgb_to_lab calls that received out-of-range values so far."""
    return _clamp_warnings


def reset_clamp_warnings() -> None:
    global _clamp_warnings
    _clamp_warnings = 0


def _srgb_decode(s):
    return np.where(s > _GAMMA_KNEE, ((s + 0.055) / 1.055) ** 2.4, s / 12.92)


def _srgb_decode_deriv(s):
    return np.where(s > _GAMMA_KNEE,
                    (2.4 / 1.055) * ((s + 0.055) / 1.055) ** 1.4,
                    1.0 / 12.92)


def _srgb_encode(lin):
    pos = np.maximum(lin, 0.0)  # power branch only evaluated where lin > knee
    return np.where(lin > _LINEAR_KNEE, 1.055 * pos ** (1 / 2.4) - 0.055, 12.92 * lin)


def _srgb_encode_deriv(lin):
    pos = np.maximum(lin, _LINEAR_KNEE)
    return np.where(lin > _LINEAR_KNEE, (1.055 / 2.4) * pos ** (1 / 2.4 - 1.0), 12.92)


def _f_lab(t):
    pos = np.maximum(t, 0.0)
    return np.where(t > _DELTA3, np.cbrt(pos), _KAPPA * t + 4.0 / 29.0)


def _f_lab_deriv(t):
    pos = np.maximum(t, _DELTA3)
    return np.where(t > _DELTA3, np.cbrt(pos) ** -2 / 3.0, _KAPPA)


def _f_lab_inv(f):
    return np.where(f > _DELTA, f ** 3, (f - 4.0 / 29.0) / _KAPPA)


def _f_lab_inv_deriv(f):
    return np.where(f > _DELTA, 3.0 * f ** 2, 1.0 / _KAPPA)


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """Convert an sRGB image in [0,1] to Lab. Shape (..., 3) is preserved."""
    global _clamp_warnings
    img = np.asarray(img, dtype=np.float64)
    if img.min() < 0.0 or img.max() > 1.0:
        _clamp_warnings += 1
        img = np.clip(img, 0.0, 1.0)
    lin = _srgb_decode(img)
    xyz = lin @ _RGB2XYZ.T
    f = _f_lab(xyz / _WHITE)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def rgb_to_lab_backward(grad_lab: np.ndarray, saved_rgb: np.ndarray) -> np.ndarray:
    """Jacobian-transpose product of rgb_to_lab at saved_rgb (pre-clamp values)."""
    grad_lab = np.asarray(grad_lab, dtype=np.float64)
    rgb = np.asarray(saved_rgb, dtype=np.float64)
    in_range = (rgb >= 0.0) & (rgb <= 1.0)
    rgb = np.clip(rgb, 0.0, 1.0)

    lin = _srgb_decode(rgb)
    xyz = lin @ _RGB2XYZ.T
    # dL/df, da/df, db/df rows of the Lab map
    gf = np.empty_like(xyz)
    gL, ga, gb = grad_lab[..., 0], grad_lab[..., 1], grad_lab[..., 2]
    gf[..., 0] = 500.0 * ga
    gf[..., 1] = 116.0 * gL - 500.0 * ga + 200.0 * gb
    gf[..., 2] = -200.0 * gb
    gxyz = gf * _f_lab_deriv(xyz / _WHITE) / _WHITE
    glin = gxyz @ _RGB2XYZ
    grad_rgb = glin * _srgb_decode_deriv(rgb)
    return np.where(in_range, grad_rgb, 0.0)


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    rgb, _ = lab_to_rgb_with_mask(lab)
    return rgb


def lab_to_rgb_with_mask(lab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse conversion; also returns the boolean mask of clamped channels."""
    lab = np.asarray(lab, dtype=np.float64)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_f_lab_inv(fx), _f_lab_inv(fy), _f_lab_inv(fz)], axis=-1) * _WHITE
    lin = xyz @ _XYZ2RGB.T
    rgb = _srgb_encode(lin)
    clamped = (rgb < 0.0) | (rgb > 1.0)
    return np.clip(rgb, 0.0, 1.0), clamped


def lab_to_rgb_backward(grad_rgb: np.ndarray, saved_lab: np.ndarray) -> np.ndarray:
    """Jacobian-transpose product of lab_to_rgb; clamped channels pass no gradient."""
    grad_rgb = np.asarray(grad_rgb, dtype=np.float64)
    lab = np.asarray(saved_lab, dtype=np.float64)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    xyz = _f_lab_inv(f) * _WHITE
    lin = xyz @ _XYZ2RGB.T
    rgb = _srgb_encode(lin)

    g = np.where((rgb < 0.0) | (rgb > 1.0), 0.0, grad_rgb)
    glin = g * _srgb_encode_deriv(lin)
    gxyz = glin @ _XYZ2RGB
    gf = gxyz * _WHITE * _f_lab_inv_deriv(f)
    gfx, gfy, gfz = gf[..., 0], gf[..., 1], gf[..., 2]
    gL = (gfx + gfy + gfz) / 116.0
    ga = gfx / 500.0
    gb = -gfz / 200.0
    return np.stack([gL, ga, gb], axis=-1)
