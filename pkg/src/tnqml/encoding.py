"""Image preprocessing and the cosine/sine product-state feature map."""

from __future__ import annotations

import numpy as np

SOURCE_SIZE = 28
TARGET_SIZE = 8
_CROP = 2
_POOL = 3


def downscale(img: np.ndarray) -> np.ndarray:
    """Reduce 28x28 images to 8x8.

    The 2-pixel border is cropped and the remaining 24x24 grid is mean-pooled
    over non-overlapping 3x3 blocks, rounding half up.  Works on a single
    image or a stack of shape ``(count, 28, 28)``.
    """
    img = np.asarray(img)
    if img.shape[-2:] != (SOURCE_SIZE, SOURCE_SIZE):
        raise ValueError(f"expected 28x28 input, got shape {img.shape[-2:]}")
    core = img[..., _CROP : SOURCE_SIZE - _CROP, _CROP : SOURCE_SIZE - _CROP].astype(np.int64)
    lead = core.shape[:-2]
    blocks = core.reshape(lead + (TARGET_SIZE, _POOL, TARGET_SIZE, _POOL)).sum(axis=(-3, -1))
    area = _POOL * _POOL
    # round(s / 9) with ties going up, kept in integer arithmetic
    return ((2 * blocks + area) // (2 * area)).astype(np.uint8)


def normalize(img: np.ndarray) -> np.ndarray:
    """Flatten row-major and scale pixel values into ``[0, 1]``."""
    img = np.asarray(img)
    if img.ndim < 2:
        raise ValueError("image must have at least two axes")
    return img.reshape(img.shape[:-2] + (-1,)).astype(float) / 255.0


def feature_map(x: np.ndarray) -> np.ndarray:
    """Map each component to ``[cos(pi x / 2), sin(pi x / 2)]``.

    Returns an array of shape ``x.shape + (2,)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or np.any(np.isnan(x)):
        raise ValueError("feature map inputs must lie in [0, 1]")
    angle = 0.5 * np.pi * x
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def encode_images(images: np.ndarray, downscale_first: bool = True) -> np.ndarray:
    """Raw ``uint8`` images to site amplitudes of shape ``(count, N, 2)``."""
    if downscale_first:
        images = downscale(images)
    return feature_map(normalize(images))
