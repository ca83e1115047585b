"""Deterministic synthetic images used by the test suite and the docs.

The two-region image splits the frame into a left and a right half with
clearly separated base colors, then adds smooth shading and a little seeded
per-pixel noise so that every pixel is distinct and first-iteration labels
stay diverse.
"""

import numpy as np

from .losses import Scribbles

LEFT_RGB = (0.25, 0.35, 0.75)
RIGHT_RGB = (0.80, 0.55, 0.20)


def constant_image(height=64, width=64, rgb=(0.5, 0.5, 0.5)):
    img = np.empty((3, height, width), dtype=np.float32)
    img[:] = np.asarray(rgb, dtype=np.float32)[:, None, None]
    return img


def two_region_image(size=64, seed=0, noise=0.03):
    """A (3, size, size) float32 image: left half vs right half, textured."""
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    left = np.asarray(LEFT_RGB, dtype=np.float64)[:, None, None]
    right = np.asarray(RIGHT_RGB, dtype=np.float64)[:, None, None]
    in_right = (xs >= 0.5)[None, :, :]
    img = np.where(in_right, right, left)
    shading = 0.06 * np.sin(2 * np.pi * 2.0 * ys) + 0.06 * np.cos(
        2 * np.pi * 3.0 * xs
    )
    img = img + shading[None, :, :]
    img += noise * rng.uniform(-1.0, 1.0, size=(3, size, size))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def two_region_mask(size=64):
    """Region index per pixel: 0 for the left half, 1 for the right half."""
    _, xs = np.mgrid[0:size, 0:size]
    return (xs >= size // 2).astype(np.int32)


def two_region_scribbles(size=64):
    """One short horizontal scribble per region: label 0 left, label 1 right."""
    mask = np.zeros((size, size), dtype=np.uint8)
    labels = np.zeros((size, size), dtype=np.int32)
    row = size // 2
    left_cols = slice(size // 8, size // 8 + size // 4)
    right_cols = slice(5 * size // 8, 5 * size // 8 + size // 4)
    mask[row, left_cols] = 1
    labels[row, left_cols] = 0
    mask[row, right_cols] = 1
    labels[row, right_cols] = 1
    return Scribbles(mask=mask, labels=labels)
