"""Dataset generation, loading and image file I/O.

Datasets live on disk as a class-per-directory tree of 8-bit RGB images
(PNG or PPM); class labels are assigned by lexicographic directory order.
The synthetic generator renders ten textured shape classes at 32x32 so the
whole pipeline runs without downloads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = {".png", ".ppm"}

SHAPE_CLASSES = (
    "circle", "cross", "diamond", "hbars", "ring",
    "square", "star", "stripes", "triangle", "vbars",
)


class DatasetError(ValueError):
    pass


@dataclass
class LabeledImages:
    images: list[np.ndarray]
    labels: np.ndarray
    class_names: list[str]
    paths: list[str]

    def __len__(self) -> int:
        return len(self.images)


def quantize_to_byte(img: np.ndarray) -> np.ndarray:
    """[0,1] floats to uint8 with half-up rounding."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    Image.fromarray(quantize_to_byte(img), mode="RGB").save(path)


def load_image(path: str | os.PathLike) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.mode != "RGB":
                raise DatasetError(f"{path}: expected 8-bit RGB, got mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.float64)
    except DatasetError:
        raise
    except Exception as exc:
        raise DatasetError(f"{path}: unreadable image ({exc})") from exc
    return arr / 255.0


def load_dataset(path: str | os.PathLike) -> LabeledImages:
    """Read a class-per-directory tree; labels follow sorted directory names."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise DatasetError(f"{root}: no class directories")
    images, labels, paths = [], [], []
    class_names = [d.name for d in class_dirs]
    for label, d in enumerate(class_dirs):
        files = sorted(f for f in d.iterdir() if f.suffix.lower() in IMAGE_EXTENSIONS)
        if not files:
            raise DatasetError(f"{d}: empty class directory")
        for f in files:
            images.append(load_image(f))
            labels.append(label)
            paths.append(str(f))
    return LabeledImages(images, np.array(labels, dtype=np.int64), class_names, paths)


# ---------------------------------------------------------------------------
# Synthetic textured-shapes generator
# ---------------------------------------------------------------------------

def _shape_mask(name: str, size: int, rng: np.random.Generator) -> np.ndarray:
    cx = size / 2 + rng.uniform(-3, 3)
    cy = size / 2 + rng.uniform(-3, 3)
    r = rng.uniform(0.26, 0.36) * size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    dist = np.hypot(dx, dy)
    box = np.maximum(np.abs(dx), np.abs(dy)) <= r

    if name == "circle":
        return dist <= r
    if name == "ring":
        return (dist <= r) & (dist >= 0.55 * r)
    if name == "square":
        return box
    if name == "diamond":
        return np.abs(dx) + np.abs(dy) <= 1.2 * r
    if name == "triangle":
        return (dy >= -r) & (np.abs(dx) <= (r - dy) * 0.6) & (dy <= r)
    if name == "cross":
        arm = 0.38 * r
        return ((np.abs(dx) <= arm) | (np.abs(dy) <= arm)) & box
    if name == "star":
        theta = np.arctan2(dy, dx)
        return dist <= r * (0.55 + 0.45 * np.cos(5 * theta))
    if name == "hbars":
        return ((yy // 2) % 2 == 0) & box
    if name == "vbars":
        return ((xx // 2) % 2 == 0) & box
    if name == "stripes":
        return (((xx + yy) // 3) % 2 == 0) & box
    raise ValueError(f"unknown shape class {name!r}")


def render_shape_image(name: str, size: int, rng: np.random.Generator) -> np.ndarray:
    bg = rng.uniform(0.25, 0.75, 3)
    # foreground pushed away from the background in each channel
    direction = np.where(bg < 0.5, 1.0, -1.0)
    fg = bg + direction * rng.uniform(0.3, 0.5, 3)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    ramp = (rng.uniform(-1, 1) * xx + rng.uniform(-1, 1) * yy) / size
    img = bg[None, None, :] + 0.08 * ramp[..., None]
    mask = _shape_mask(name, size, rng)
    img = np.where(mask[..., None], fg[None, None, :], img)
    img += rng.normal(0.0, 0.035, img.shape)  # texture everywhere
    return np.clip(img, 0.0, 1.0)


def generate_dataset(root: str | os.PathLike, train_per_class: int = 200,
                     test_per_class: int = 50, size: int = 32, seed: int = 0) -> None:
    """Write train/ and test/ class-per-directory trees of PNG files."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    for split, count in (("train", train_per_class), ("test", test_per_class)):
        for name in SHAPE_CLASSES:
            d = root / split / name
            d.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                img = render_shape_image(name, size, rng)
                save_image(img, d / f"{name}_{i:04d}.png")
