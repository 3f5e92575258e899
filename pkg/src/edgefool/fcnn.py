"""Fully convolutional network that learns an image's smooth structure.

Seven 3x3 dilated conv layers (24 feature maps, dilations 1,2,4,8,16,32,1),
each followed by instance norm and leaky ReLU, then a linear 1x1 conv down to
3 channels. Zero "same-size" padding keeps the output at the input resolution
for any image size, so one parameter set serves all sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .ops import ConvSpec


@dataclass(frozen=True)
class FcnnArchitecture:
    features: int = 24
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 1, 1)  # last = 1x1 layer
    lrelu_slope: float = 0.2
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        if len(self.dilations) < 2:
            raise ValueError("need at least one 3x3 layer plus the 1x1 output layer")
        if not 0 < self.lrelu_slope < 1:
            raise ValueError(f"lrelu_slope must be in (0,1), got {self.lrelu_slope}")

    def conv_specs(self) -> list[ConvSpec]:
        specs = []
        n = len(self.dilations)
        for i, d in enumerate(self.dilations):
            cin = self.in_channels if i == 0 else self.features
            if i == n - 1:
                specs.append(ConvSpec(self.features, self.out_channels, (1, 1), 1, 0))
            else:
                specs.append(ConvSpec.same_size(cin, self.features, (3, 3), d))
        return specs


@dataclass
class FcnnParams:
    arch: FcnnArchitecture
    seed: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def fcnn_init(arch: FcnnArchitecture = FcnnArchitecture(), seed: int = 0) -> FcnnParams:
    """Fan-in-scaled uniform weights (variance 2/fan_in), zero biases,
    unit norm gains, zero norm shifts. Deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    specs = arch.conv_specs()
    last = len(specs) - 1
    for i, spec in enumerate(specs):
        fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1]
        bound = np.sqrt(6.0 / fan_in)
        if i == last:
            bound *= 0.5  # tame the regression head so fresh outputs stay small
        tensors[f"conv{i}.w"] = rng.uniform(-bound, bound, spec.weight_shape())
        tensors[f"conv{i}.b"] = np.zeros(spec.out_channels)
        if i != last:
            tensors[f"norm{i}.gain"] = np.ones(spec.out_channels)
            tensors[f"norm{i}.shift"] = np.zeros(spec.out_channels)
    return FcnnParams(arch, seed, tensors)


def fcnn_forward(img: np.ndarray, params: FcnnParams):
    """Map an (H,W,3) image to its structure image; also returns the
    activation cache needed by fcnn_backward."""
    x = np.moveaxis(np.asarray(img, dtype=np.float64), 2, 0)
    arch = params.arch
    specs = arch.conv_specs()
    last = len(specs) - 1
    acts = {"params_id": id(params), "inputs": [], "norm_inputs": [], "pre_acts": []}
    for i, spec in enumerate(specs):
        acts["inputs"].append(x)
        x = ops.conv2d_forward(x, spec, params.tensors[f"conv{i}.w"],
                               params.tensors[f"conv{i}.b"])
        if i != last:
            acts["norm_inputs"].append(x)
            if x.shape[1] * x.shape[2] < 2:
                # zero-variance limit of instance norm for a single pixel
                x = np.broadcast_to(
                    params.tensors[f"norm{i}.shift"][:, None, None], x.shape).copy()
            else:
                x = ops.instance_norm_forward(x, params.tensors[f"norm{i}.gain"],
                                              params.tensors[f"norm{i}.shift"])
            acts["pre_acts"].append(x)
            x = ops.leaky_relu_forward(x, arch.lrelu_slope)
    structure = np.moveaxis(x, 0, 2)
    return structure, acts


def fcnn_backward(grad_structure: np.ndarray, acts: dict, params: FcnnParams
                  ) -> dict[str, np.ndarray]:
    """Gradients w.r.t. every parameter tensor for the matching forward call."""
    if acts.get("params_id") != id(params):
        raise ValueError("activation cache does not match these parameters")
    arch = params.arch
    specs = arch.conv_specs()
    last = len(specs) - 1
    grads: dict[str, np.ndarray] = {}
    g = np.moveaxis(np.asarray(grad_structure, dtype=np.float64), 2, 0)
    for i in range(last, -1, -1):
        spec = specs[i]
        if i != last:
            g = ops.leaky_relu_backward(g, acts["pre_acts"][i], arch.lrelu_slope)
            norm_in = acts["norm_inputs"][i]
            if norm_in.shape[1] * norm_in.shape[2] < 2:
                grads[f"norm{i}.gain"] = np.zeros_like(params.tensors[f"norm{i}.gain"])
                grads[f"norm{i}.shift"] = g.sum(axis=(1, 2))
                g = np.zeros_like(norm_in)
            else:
                g, ggain, gshift = ops.instance_norm_backward(
                    g, norm_in, params.tensors[f"norm{i}.gain"],
                    params.tensors[f"norm{i}.shift"])
                grads[f"norm{i}.gain"] = ggain
                grads[f"norm{i}.shift"] = gshift
        g, gw, gb = ops.conv2d_backward(g, acts["inputs"][i], spec,
                                        params.tensors[f"conv{i}.w"])
        grads[f"conv{i}.w"] = gw
        grads[f"conv{i}.b"] = gb
    return grads
