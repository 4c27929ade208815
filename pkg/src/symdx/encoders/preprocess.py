"""Image decoding and preprocessing for the visual encoder.

Pipeline: decode -> RGB -> bicubic resize so the shorter side matches
the target -> center crop -> scale to [0,1] -> per-channel standardize
with the constants shipped in the bundle's asset manifest.  Grayscale
inputs (X-rays) are replicated across the three channels at decode
time.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import DecodeError


@dataclass(frozen=True)
class PreprocessConstants:
    """Per-bundle preprocessing parameters from the asset manifest."""

    image_size: int
    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def __post_init__(self):
        if self.image_size <= 0:
            raise ValueError("image_size must be positive")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ValueError("mean/std must have one value per RGB channel")
        if any(s <= 0 for s in self.std):
            raise ValueError("std values must be positive")


@dataclass(frozen=True)
class ImageTensor:
    """Standardized pixels in channels-first RGB layout."""

    data: np.ndarray  # float32, shape (3, size, size)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[0] != 3:
            raise ValueError(f"expected (3, H, W) tensor, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image tensor contains NaN or Inf")
        self.data.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)


def _decode(raw: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeError(f"cannot decode image bytes: {e}") from e
    if img.width == 0 or img.height == 0:
        raise DecodeError("image has zero area")
    return img


def _resize_shorter_side(img: Image.Image, target: int) -> Image.Image:
    # bicubic both ways: upsampling for small inputs, downsampling for
    # large; the long side truncates, matching the reference pipeline
    w, h = img.size
    if w <= h:
        new_w, new_h = target, max(1, int(target * h / w))
    else:
        new_w, new_h = max(1, int(target * w / h)), target
    return img.resize((new_w, new_h), Image.Resampling.BICUBIC)


def _center_crop(img: Image.Image, size: int) -> Image.Image:
    w, h = img.size
    left = (w - size) // 2
    top = (h - size) // 2
    return img.crop((left, top, left + size, top + size))


def preprocess_image(raw: bytes, constants: PreprocessConstants) -> ImageTensor:
    """Turn encoded image bytes into a standardized encoder input."""
    img = _decode(raw).convert("RGB")
    size = constants.image_size
    img = _resize_shorter_side(img, size)
    img = _center_crop(img, size)
    pixels = np.asarray(img, dtype=np.float32) / 255.0  # (H, W, 3) in [0,1]
    chw = pixels.transpose(2, 0, 1)
    mean = np.asarray(constants.mean, dtype=np.float32).reshape(3, 1, 1)
    std = np.asarray(constants.std, dtype=np.float32).reshape(3, 1, 1)
    return ImageTensor((chw - mean) / std)


def load_image_file(path: str | Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DecodeError(f"cannot read image file {path}: {e}") from e
