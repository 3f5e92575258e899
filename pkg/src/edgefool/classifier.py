"""Frozen target classifiers: two small CNNs with training and serialization.

Architecture "cnn-a" stacks three conv blocks before a linear head; "cnn-b"
is shallower with different widths, giving a genuinely distinct decision
surface for transferability measurements. All forward/backward math runs
through the ops module; average pooling and leaky ReLU keep every path
differentiable for gradient-based attacks.

Models serialize to a packed-weights file: the 8-byte magic "DFWT0001",
a little-endian uint64 length-prefixed UTF-8 JSON manifest (architecture,
class count, input size, mean/std, tensor shape/offset table), then the raw
tensor data as little-endian float64, byte-exact on round trip.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .data import LabeledImages
from .ops import ConvSpec

MAGIC = b"DFWT0001"


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class _ConvBlock:
    spec: ConvSpec
    pool: int


@dataclass(frozen=True)
class _Architecture:
    name: str
    blocks: tuple[_ConvBlock, ...]
    lrelu_slope: float = 0.1


_ARCHITECTURES = {
    "cnn-a": _Architecture("cnn-a", (
        _ConvBlock(ConvSpec.same_size(3, 16), pool=2),
        _ConvBlock(ConvSpec.same_size(16, 32), pool=2),
        _ConvBlock(ConvSpec.same_size(32, 48), pool=2),
    )),
    "cnn-b": _Architecture("cnn-b", (
        _ConvBlock(ConvSpec.same_size(3, 12, kernel=(5, 5)), pool=2),
        _ConvBlock(ConvSpec.same_size(12, 24), pool=2),
    )),
}


def architecture_names() -> list[str]:
    return sorted(_ARCHITECTURES)


@dataclass
class ClassifierModel:
    architecture: str
    num_classes: int
    input_size: tuple[int, int]
    mean: np.ndarray  # per-channel, applied before the first conv
    std: np.ndarray
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def arch(self) -> _Architecture:
        return _ARCHITECTURES[self.architecture]


@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    probs: np.ndarray
    label: int


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _feature_size(arch: _Architecture, input_size) -> int:
    h, w = input_size
    c = arch.blocks[-1].spec.out_channels
    for b in arch.blocks:
        h //= b.pool
        w //= b.pool
    return c * h * w


def init_model(architecture: str, num_classes: int, input_size=(32, 32),
               seed: int = 0, mean=None, std=None) -> ClassifierModel:
    if architecture not in _ARCHITECTURES:
        raise ValueError(f"unknown architecture {architecture!r}; "
                         f"choose from {architecture_names()}")
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    arch = _ARCHITECTURES[architecture]
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for i, block in enumerate(arch.blocks):
        spec = block.spec
        fan_in = spec.in_channels * spec.kernel[0] * spec.kernel[1]
        bound = np.sqrt(6.0 / fan_in)
        tensors[f"conv{i}.w"] = rng.uniform(-bound, bound, spec.weight_shape())
        tensors[f"conv{i}.b"] = np.zeros(spec.out_channels)
    feat = _feature_size(arch, input_size)
    bound = np.sqrt(6.0 / feat)
    tensors["dense.w"] = rng.uniform(-bound, bound, (num_classes, feat))
    tensors["dense.b"] = np.zeros(num_classes)
    mean = np.full(3, 0.5) if mean is None else np.asarray(mean, dtype=np.float64)
    std = np.full(3, 0.25) if std is None else np.asarray(std, dtype=np.float64)
    return ClassifierModel(architecture, num_classes, tuple(input_size),
                           mean, std, tensors)


def _forward(model: ClassifierModel, img: np.ndarray):
    """Logits plus the activation cache for backward passes."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (*model.input_size, 3):
        raise ops.ShapeError(
            f"classifier: image shape {img.shape} != {(*model.input_size, 3)}")
    arch = model.arch()
    x = np.moveaxis((img - model.mean) / model.std, 2, 0)
    cache = {"model": model, "conv_inputs": [], "pre_acts": [], "pooled_shapes": []}
    for i, block in enumerate(arch.blocks):
        cache["conv_inputs"].append(x)
        x = ops.conv2d_forward(x, block.spec, model.tensors[f"conv{i}.w"],
                               model.tensors[f"conv{i}.b"])
        cache["pre_acts"].append(x)
        x = ops.leaky_relu_forward(x, arch.lrelu_slope)
        x = ops.avg_pool2d_forward(x, block.pool)
    cache["features"] = x
    logits = ops.dense_forward(x, model.tensors["dense.w"], model.tensors["dense.b"])
    return logits, cache


def _backward(model: ClassifierModel, cache: dict, cotangent: np.ndarray,
              want_param_grads: bool):
    """Gradient w.r.t. the [0,1] input image (and optionally the parameters)."""
    if cache.get("model") is not model:
        raise ValueError("activation cache does not belong to this model")
    arch = model.arch()
    grads: dict[str, np.ndarray] = {}
    g, gw, gb = ops.dense_backward(cotangent, cache["features"], model.tensors["dense.w"])
    if want_param_grads:
        grads["dense.w"], grads["dense.b"] = gw, gb
    for i in range(len(arch.blocks) - 1, -1, -1):
        block = arch.blocks[i]
        g = ops.avg_pool2d_backward(g, block.pool)
        g = ops.leaky_relu_backward(g, cache["pre_acts"][i], arch.lrelu_slope)
        g, gw, gb = ops.conv2d_backward(g, cache["conv_inputs"][i], block.spec,
                                        model.tensors[f"conv{i}.w"])
        if want_param_grads:
            grads[f"conv{i}.w"], grads[f"conv{i}.b"] = gw, gb
    grad_img = np.moveaxis(g, 0, 2) / model.std
    return grad_img, grads


def classify(model: ClassifierModel, img: np.ndarray) -> Prediction:
    logits, _ = _forward(model, img)
    probs = softmax(logits)
    return Prediction(logits, probs, int(np.argmax(probs)))


def classify_with_cache(model: ClassifierModel, img: np.ndarray):
    logits, cache = _forward(model, img)
    probs = softmax(logits)
    return Prediction(logits, probs, int(np.argmax(probs))), cache


def classifier_backward_to_input(model: ClassifierModel, cache: dict,
                                 cotangent: np.ndarray) -> np.ndarray:
    grad_img, _ = _backward(model, cache, cotangent, want_param_grads=False)
    return grad_img


def margin_loss(logits: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    """Own-class logit minus the best other logit; negative iff misled.

    The runner-up under ties is the lowest index, so the gradient (+1 at y,
    -1 at the runner-up) is deterministic.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.size < 2:
        raise ValueError("margin loss needs at least 2 classes")
    if not 0 <= y < z.size:
        raise ValueError(f"label {y} outside [0,{z.size})")
    masked = z.copy()
    masked[y] = -np.inf
    runner_up = int(np.argmax(masked))
    loss = float(z[y] - z[runner_up])
    grad = np.zeros_like(z)
    grad[y] = 1.0
    grad[runner_up] = -1.0
    return loss, grad


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 32
    lr: float = 1e-3
    flip_augment: bool = True


def _accuracy(model: ClassifierModel, images, labels) -> float:
    hits = sum(classify(model, img).label == int(y)
               for img, y in zip(images, labels))
    return hits / len(images)


def train_classifier(train_set: LabeledImages, test_set: LabeledImages,
                     architecture: str, cfg: TrainConfig = TrainConfig(),
                     seed: int = 0) -> tuple[ClassifierModel, float]:
    """Cross-entropy training with Adam; deterministic for a fixed seed.
    Returns the trained model and its test accuracy."""
    if len(train_set) == 0 or len(test_set) == 0:
        raise ValueError("empty dataset")
    num_classes = len(train_set.class_names)
    if train_set.labels.min() < 0 or train_set.labels.max() >= num_classes:
        raise ValueError("labels outside [0, num_classes)")
    stack = np.stack(train_set.images)
    mean = stack.mean(axis=(0, 1, 2))
    std = stack.std(axis=(0, 1, 2)) + 1e-8
    h, w = train_set.images[0].shape[:2]
    model = init_model(architecture, num_classes, (h, w), seed=seed,
                       mean=mean, std=std)
    rng = np.random.default_rng(seed + 1)
    state = ops.adam_init(model.tensors, lr=cfg.lr)
    n = len(train_set)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            total: dict[str, np.ndarray] = {k: np.zeros_like(v)
                                            for k, v in model.tensors.items()}
            for idx in batch:
                img = train_set.images[idx]
                if cfg.flip_augment and rng.random() < 0.5:
                    img = img[:, ::-1, :]
                y = int(train_set.labels[idx])
                logits, cache = _forward(model, img)
                p = softmax(logits)
                cot = p.copy()
                cot[y] -= 1.0  # d cross-entropy / d logits
                _, grads = _backward(model, cache, cot, want_param_grads=True)
                for k, g in grads.items():
                    total[k] += g
            for k in total:
                total[k] /= len(batch)
            model.tensors, state = ops.adam_step(model.tensors, total, state)
    return model, _accuracy(model, test_set.images, test_set.labels)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_model(model: ClassifierModel, path) -> None:
    names = sorted(model.tensors)
    offset = 0
    table = {}
    blobs = []
    for name in names:
        t = np.ascontiguousarray(model.tensors[name], dtype="<f8")
        table[name] = {"shape": list(t.shape), "offset": offset}
        blob = t.tobytes()
        offset += len(blob)
        blobs.append(blob)
    manifest = {
        "format_version": 1,
        "architecture": model.architecture,
        "num_classes": model.num_classes,
        "input_size": list(model.input_size),
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "tensors": table,
    }
    payload = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_model(path, architecture: str | None = None) -> ClassifierModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 8 or raw[:len(MAGIC)] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic, not a packed-weights file")
    (length,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    if start + length > len(raw):
        raise ModelFormatError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[start:start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt manifest ({exc})") from exc
    data = raw[start + length:]
    arch_name = manifest.get("architecture")
    if arch_name not in _ARCHITECTURES:
        raise ModelFormatError(f"{path}: unknown architecture {arch_name!r}")
    if architecture is not None and arch_name != architecture:
        raise ModelFormatError(
            f"{path}: architecture mismatch, file holds {arch_name!r}, "
            f"expected {architecture!r}")
    tensors = {}
    for name, entry in manifest["tensors"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        end = off + count * 8
        if off < 0 or end > len(data):
            raise ModelFormatError(f"{path}: tensor {name!r} extends past data section")
        tensors[name] = np.frombuffer(data[off:end], dtype="<f8").reshape(shape).copy()
    model = ClassifierModel(arch_name, manifest["num_classes"],
                            tuple(manifest["input_size"]),
                            np.array(manifest["mean"], dtype=np.float64),
                            np.array(manifest["std"], dtype=np.float64), tensors)
    expected = {f"conv{i}.w" for i in range(len(model.arch().blocks))}
    expected |= {f"conv{i}.b" for i in range(len(model.arch().blocks))}
    expected |= {"dense.w", "dense.b"}
    if set(tensors) != expected:
        raise ModelFormatError(
            f"{path}: tensor table {sorted(tensors)} does not match "
            f"architecture {arch_name!r}")
    return model


def weights_hash(model: ClassifierModel) -> str:
    h = hashlib.sha256()
    for name in sorted(model.tensors):
        h.update(name.encode())
        h.update(np.ascontiguousarray(model.tensors[name], dtype="<f8").tobytes())
    return h.hexdigest()
