"""Input validation helpers shared by the estimators and protocol functions."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import SingleClass, ZeroClasses


def check_image(img) -> np.ndarray:
    """Return ``img`` as a C-contiguous ``(H, W, 3)`` uint8 array.

    Integer arrays outside ``[0, 255]`` and anything that is not three-channel
    are rejected with ``ValueError``; uint8 input is passed through without a copy.
    """
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image has no pixels: shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError(f"image must hold integer channel values, got {arr.dtype}")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("channel values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def check_images(X) -> list[np.ndarray]:
    """Validate a batch: a 4-D array or any sequence of images. Sizes may differ."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        raise ValueError("expected a batch of images; wrap a single image in a list")
    images = [check_image(x) for x in X]
    if not images:
        raise ValueError("empty batch")
    return images


def stack_images(X) -> np.ndarray:
    images = check_images(X)
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"batch images must share one shape, got {sorted(shapes)}")
    return np.stack(images)


def check_num_classes(num_classes: int, minimum: int = 1) -> int:
    n = int(num_classes)
    if n < 1:
        raise ZeroClasses(f"num_classes must be >= 1, got {num_classes}")
    if n < minimum:
        raise SingleClass(f"need at least {minimum} classes, got {n}")
    return n


def check_logits(logits: Sequence[float]) -> np.ndarray:
    arr = np.array(logits, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"logits must be a vector, got shape {arr.shape}")
    if arr.size < 2:
        raise SingleClass("logits need at least two classes")
    return arr
