"""Dense tensor primitives with hand-derived backward passes.

Everything here operates on float64 numpy arrays, is pure (inputs are never
mutated) and deterministic. The convolution is a dilated cross-correlation
with zero padding; "same-size" configurations use padding = dilation*(k-1)/2.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


class ShapeError(ValueError):
    """Raised when an operand dimension does not match the declared spec."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (3, 3)
    dilation: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.dilation < 1:
            raise ValueError(f"dilation must be >= 1, got {self.dilation}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")

    @staticmethod
    def same_size(in_channels: int, out_channels: int,
                  kernel: tuple[int, int] = (3, 3), dilation: int = 1) -> "ConvSpec":
        """Spec whose output spatial size equals the input's (odd kernels only)."""
        kh, kw = kernel
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"same-size padding needs odd kernel, got {kernel}")
        if kh != kw:
            raise ValueError(f"same-size padding assumes square kernel, got {kernel}")
        return ConvSpec(in_channels, out_channels, kernel, dilation,
                        padding=dilation * (kh - 1) // 2)

    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, *self.kernel)


def _check_conv_operands(x, spec: ConvSpec, weights, bias):
    if x.ndim != 3:
        raise ShapeError(f"conv2d: input must be (C,H,W), got ndim={x.ndim}")
    if x.shape[0] != spec.in_channels:
        raise ShapeError(
            f"conv2d: input channels {x.shape[0]} != spec.in_channels {spec.in_channels}")
    if weights.shape != spec.weight_shape():
        raise ShapeError(
            f"conv2d: weights shape {weights.shape} != expected {spec.weight_shape()}")
    if bias.shape != (spec.out_channels,):
        raise ShapeError(
            f"conv2d: bias shape {bias.shape} != ({spec.out_channels},)")


def _conv_out_hw(spec: ConvSpec, H: int, W: int) -> tuple[int, int]:
    kh, kw = spec.kernel
    oh = H + 2 * spec.padding - spec.dilation * (kh - 1)
    ow = W + 2 * spec.padding - spec.dilation * (kw - 1)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"conv2d: receptive field exceeds padded input ({H}x{W}, pad {spec.padding})")
    return oh, ow


def _im2col(xpad: np.ndarray, spec: ConvSpec, oh: int, ow: int) -> np.ndarray:
    """(C_in*kh*kw, oh*ow) patch matrix for a zero-padded input."""
    kh, kw = spec.kernel
    d = spec.dilation
    C = xpad.shape[0]
    cols = np.empty((C, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xpad[:, d * i:d * i + oh, d * j:d * j + ow]
    return cols.reshape(C * kh * kw, oh * ow)


def conv2d_forward(x: np.ndarray, spec: ConvSpec,
                   weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Dilated cross-correlation with zero padding, plus per-channel bias."""
    x, weights, bias = _as_f64(x), _as_f64(weights), _as_f64(bias)
    _check_conv_operands(x, spec, weights, bias)
    _, H, W = x.shape
    oh, ow = _conv_out_hw(spec, H, W)
    p = spec.padding
    xpad = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
    cols = _im2col(xpad, spec, oh, ow)
    wmat = weights.reshape(spec.out_channels, -1)
    out = wmat @ cols + bias[:, None]
    return out.reshape(spec.out_channels, oh, ow)


def conv2d_backward(grad_out: np.ndarray, saved_input: np.ndarray, spec: ConvSpec,
                    weights: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of conv2d_forward w.r.t. input, weights and bias."""
    grad_out, x, weights = _as_f64(grad_out), _as_f64(saved_input), _as_f64(weights)
    _check_conv_operands(x, spec, weights, np.zeros(spec.out_channels))
    _, H, W = x.shape
    oh, ow = _conv_out_hw(spec, H, W)
    if grad_out.shape != (spec.out_channels, oh, ow):
        raise ShapeError(
            f"conv2d: grad_out shape {grad_out.shape} != ({spec.out_channels},{oh},{ow})")
    kh, kw = spec.kernel
    d, p = spec.dilation, spec.padding

    xpad = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
    cols = _im2col(xpad, spec, oh, ow)
    gmat = grad_out.reshape(spec.out_channels, -1)

    grad_bias = gmat.sum(axis=1)
    grad_weights = (gmat @ cols.T).reshape(weights.shape)

    wmat = weights.reshape(spec.out_channels, -1)
    gcols = (wmat.T @ gmat).reshape(spec.in_channels, kh, kw, oh, ow)
    gpad = np.zeros_like(xpad)
    for i in range(kh):
        for j in range(kw):
            gpad[:, d * i:d * i + oh, d * j:d * j + ow] += gcols[:, i, j]
    grad_input = gpad[:, p:p + H, p:p + W] if p else gpad
    return grad_input, grad_weights, grad_bias


def leaky_relu_forward(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    x = _as_f64(x)
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(grad_out: np.ndarray, saved_input: np.ndarray,
                        slope: float = 0.2) -> np.ndarray:
    # derivative at exactly 0 is the slope branch, by convention
    return _as_f64(grad_out) * np.where(_as_f64(saved_input) > 0, 1.0, slope)


def instance_norm_forward(x: np.ndarray, gain: np.ndarray, shift: np.ndarray,
                          eps: float = 1e-5) -> np.ndarray:
    """Per-channel standardization over HxW followed by an affine map."""
    x, gain, shift = _as_f64(x), _as_f64(gain), _as_f64(shift)
    C, H, W = x.shape
    if H * W < 2:
        raise ShapeError(f"instance_norm: needs H*W >= 2, got {H}x{W}")
    if gain.shape != (C,) or shift.shape != (C,):
        raise ShapeError(
            f"instance_norm: gain/shift shapes {gain.shape}/{shift.shape} != ({C},)")
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    return gain[:, None, None] * xhat + shift[:, None, None]


def instance_norm_backward(grad_out: np.ndarray, saved_input: np.ndarray,
                           gain: np.ndarray, shift: np.ndarray, eps: float = 1e-5
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g, x, gain = _as_f64(grad_out), _as_f64(saved_input), _as_f64(gain)
    C, H, W = x.shape
    if H * W < 2:
        raise ShapeError(f"instance_norm: needs H*W >= 2, got {H}x{W}")
    if g.shape != x.shape:
        raise ShapeError(f"instance_norm: grad_out shape {g.shape} != {x.shape}")
    mu = x.mean(axis=(1, 2), keepdims=True)
    var = x.var(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv

    grad_gain = (g * xhat).sum(axis=(1, 2))
    grad_shift = g.sum(axis=(1, 2))
    gmean = g.mean(axis=(1, 2), keepdims=True)
    gxhat_mean = (g * xhat).mean(axis=(1, 2), keepdims=True)
    grad_x = gain[:, None, None] * inv * (g - gmean - xhat * gxhat_mean)
    return grad_x, grad_gain, grad_shift


def avg_pool2d_forward(x: np.ndarray, k: int) -> np.ndarray:
    """Non-overlapping k x k mean pooling; H and W must divide by k."""
    x = _as_f64(x)
    C, H, W = x.shape
    if H % k or W % k:
        raise ShapeError(f"avg_pool2d: {H}x{W} not divisible by window {k}")
    return x.reshape(C, H // k, k, W // k, k).mean(axis=(2, 4))


def avg_pool2d_backward(grad_out: np.ndarray, k: int) -> np.ndarray:
    g = _as_f64(grad_out) / (k * k)
    return np.repeat(np.repeat(g, k, axis=1), k, axis=2)


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    x = _as_f64(x).ravel()
    if weights.shape[1] != x.size:
        raise ShapeError(f"dense: weights in-dim {weights.shape[1]} != input size {x.size}")
    return weights @ x + bias


def dense_backward(grad_out: np.ndarray, saved_input: np.ndarray, weights: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = _as_f64(grad_out)
    x = _as_f64(saved_input)
    grad_w = np.outer(g, x.ravel())
    grad_b = g.copy()
    grad_x = (weights.T @ g).reshape(x.shape)
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

Params = dict[str, np.ndarray]


@dataclass(frozen=True)
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Params = None
    second_moment: Params = None


def adam_init(params: Params, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    zeros = lambda: {k: np.zeros_like(v) for k, v in params.items()}
    return AdamState(lr, beta1, beta2, epsilon, 0, zeros(), zeros())


def adam_step(params: Params, grads: Params, state: AdamState
              ) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Pure: returns fresh params and state."""
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_params, m_new, v_new = {}, {}, {}
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: grad shape {g.shape} != param shape {p.shape} for {key!r}")
        m = b1 * state.first_moment[key] + (1 - b1) * g
        v = b2 * state.second_moment[key] + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        new_params[key] = p - state.lr * mhat / (np.sqrt(vhat) + state.epsilon)
        m_new[key], v_new[key] = m, v
    return new_params, replace(state, step_count=t, first_moment=m_new,
                               second_moment=v_new)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(f, x: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between f's analytic gradient and central differences.

    f(x) must return (scalar value, gradient array shaped like x). Every
    coordinate is checked; use directional_grad_check for large x.
    """
    x = _as_f64(x)
    _, grad = f(x)
    grad = _as_f64(grad)
    if grad.shape != x.shape:
        raise ShapeError(f"finite_diff_check: grad shape {grad.shape} != x shape {x.shape}")
    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        xp = flat.copy(); xp[i] += h
        xm = flat.copy(); xm[i] -= h
        fp, _ = f(xp.reshape(x.shape))
        fm, _ = f(xm.reshape(x.shape))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"finite_diff_check: non-finite f at coordinate {i}")
        fd = (fp - fm) / (2 * h)
        a = grad.ravel()[i]
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
    return worst


def directional_grad_check(f, x: np.ndarray, rng: np.random.Generator,
                           h: float = 1e-5, trials: int = 4) -> float:
    """Central-difference check along random unit directions (for large x)."""
    x = _as_f64(x)
    _, grad = f(x)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(x.shape)
        u /= np.linalg.norm(u)
        fp, _ = f(x + h * u)
        fm, _ = f(x - h * u)
        fd = (fp - fm) / (2 * h)
        a = float(np.vdot(grad, u))
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-8))
    return worst
