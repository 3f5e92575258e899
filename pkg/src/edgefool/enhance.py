"""Sigmoid detail enhancement on the Lab lightness channel.

The lightness of an image splits into a structure part (from the learned
smooth image) and a detail residual. Both are remapped through shifted
sigmoids: the structure curve is centred on `midpoint` with gentle slope
`structure_slope`, the detail curve is centred on zero with steep slope
`detail_slope`, which is what magnifies fine detail. Colour (a, b) channels
pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import color


@dataclass(frozen=True)
class EnhanceParams:
    midpoint: float = 56.0
    structure_slope: float = 1.0
    detail_slope: float = 15.0

    def __post_init__(self):
        if self.structure_slope <= 0 or self.detail_slope <= 0:
            raise ValueError("sigmoid slopes must be > 0")
        if not 0.0 <= self.midpoint <= 100.0:
            raise ValueError(f"midpoint must be in [0,100], got {self.midpoint}")


def sigmoid_remap(a, b: float):
    """f(a,b) = 1/(1+exp(-a*b)) - 0.5, odd in a, range (-0.5, 0.5)."""
    z = np.asarray(a, dtype=np.float64) * b
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out - 0.5


def sigmoid_remap_deriv(a, b: float):
    """d/da of sigmoid_remap: b * s * (1 - s) with s the plain sigmoid."""
    s = sigmoid_remap(a, b) + 0.5
    return b * s * (1.0 - s)


def enhance_lightness(structure_L: np.ndarray, detail_L: np.ndarray,
                      p: EnhanceParams) -> np.ndarray:
    """Remapped structure plus magnified detail, in L-channel units."""
    structure_term = sigmoid_remap((structure_L - p.midpoint) / 100.0,
                                   p.structure_slope) * 100.0 + p.midpoint
    detail_term = sigmoid_remap(detail_L / 100.0, p.detail_slope) * 100.0
    return structure_term + detail_term


def enhance_lightness_backward(grad_out: np.ndarray, structure_L: np.ndarray,
                               detail_L: np.ndarray, p: EnhanceParams
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives w.r.t. the two inputs as passed (no detail chain)."""
    g = np.asarray(grad_out, dtype=np.float64)
    gs = g * sigmoid_remap_deriv((structure_L - p.midpoint) / 100.0, p.structure_slope)
    gd = g * sigmoid_remap_deriv(detail_L / 100.0, p.detail_slope)
    return gs, gd


def compose_adversarial(original: np.ndarray, structure: np.ndarray,
                        p: EnhanceParams):
    """Build the enhanced image from the original and the learned structure.

    Lightness comes from enhance_lightness applied to the structure's L and
    the detail residual L(original) - L(structure); colour channels are the
    original's. Returns (image in [0,1], cache for the backward pass).
    """
    if original.shape != structure.shape:
        raise ValueError(f"shape mismatch: {original.shape} vs {structure.shape}")
    lab_orig = color.rgb_to_lab(original)
    lab_struct = color.rgb_to_lab(structure)
    structure_L = lab_struct[..., 0]
    detail_L = lab_orig[..., 0] - structure_L
    enhanced_L = enhance_lightness(structure_L, detail_L, p)
    adv_lab = np.stack([enhanced_L, lab_orig[..., 1], lab_orig[..., 2]], axis=-1)
    adv, clamped = color.lab_to_rgb_with_mask(adv_lab)
    cache = {
        "structure": structure,
        "structure_L": structure_L,
        "detail_L": detail_L,
        "adv_lab": adv_lab,
        "clamped": clamped,
        "params": p,
    }
    return adv, cache


def compose_adversarial_backward(grad_adv: np.ndarray, cache: dict) -> np.ndarray:
    """Gradient of the composed image w.r.t. the structure image.

    The structure's lightness enters twice: through its own sigmoid and,
    negated, through the detail residual; both paths are chained here.
    """
    p: EnhanceParams = cache["params"]
    g_lab = color.lab_to_rgb_backward(grad_adv, cache["adv_lab"])
    gs, gd = enhance_lightness_backward(g_lab[..., 0], cache["structure_L"],
                                        cache["detail_L"], p)
    g_structure_L = gs - gd
    g_lab_struct = np.zeros(cache["structure"].shape, dtype=np.float64)
    g_lab_struct[..., 0] = g_structure_L
    return color.rgb_to_lab_backward(g_lab_struct, cache["structure"])


def clamp_active_fraction(cache: dict) -> float:
    """Fraction of pixels whose final RGB clamp was active."""
    return float(cache["clamped"].any(axis=-1).mean())
