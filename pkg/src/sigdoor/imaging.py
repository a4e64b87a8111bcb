"""Images as ``(H, W, 3)`` uint8 arrays, bounding boxes, and lossless file I/O.

Boxes are half-open: ``BoundingBox(0, 0, 6, 6)`` covers columns 0..5 and rows
0..5. ``x`` indexes columns and ``y`` rows; every traversal in the package is
row-major (``y`` outer, ``x`` inner) with channels R, G, B innermost.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from ._validation import check_image
from .exceptions import BoxOutOfBounds, UnsupportedFormat

LOSSLESS_FORMATS = {"PNG", "PPM"}
_SUFFIX_FORMAT = {".png": "PNG", ".ppm": "PPM", ".pnm": "PPM"}


@dataclass(frozen=True)
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (0 <= self.x_min < self.x_max and 0 <= self.y_min < self.y_max):
            raise ValueError(f"degenerate or negative box {self.as_tuple()}")

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        """Parse ``"x_min,y_min,x_max,y_max"`` (parentheses and spaces tolerated)."""
        parts = text.strip().strip("()").split(",")
        if len(parts) != 4:
            raise ValueError(f"bounding box needs four integers, got {text!r}")
        return cls(*(int(p) for p in parts))

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def overlaps(self, other: "BoundingBox") -> bool:
        return (
            self.x_min < other.x_max
            and other.x_min < self.x_max
            and self.y_min < other.y_max
            and other.y_min < self.y_max
        )

    def shifted(self, dx: int = 0, dy: int = 0) -> "BoundingBox":
        return BoundingBox(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def region(self, img: np.ndarray) -> np.ndarray:
        """View of the pixels inside the box, shape ``(height, width, 3)``."""
        return img[self.y_min : self.y_max, self.x_min : self.x_max]


def validate_box(img, box: BoundingBox) -> None:
    """Raise BoxOutOfBounds unless every pixel of ``box`` lies inside ``img``."""
    height, width = np.shape(img)[:2]
    if box.x_max > width:
        raise BoxOutOfBounds(f"x_max={box.x_max} exceeds image width {width}")
    if box.y_max > height:
        raise BoxOutOfBounds(f"y_max={box.y_max} exceeds image height {height}")


def _format_for(path: Path) -> str:
    fmt = _SUFFIX_FORMAT.get(path.suffix.lower())
    if fmt is None:
        raise UnsupportedFormat(
            f"{path.suffix or path.name!r} is not a lossless format; use .png or .ppm"
        )
    return fmt


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a PNG or binary PPM file into an ``(H, W, 3)`` uint8 array.

    The decoded container is checked, not just the suffix, so a JPEG renamed
    to ``.png`` is still refused.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    _format_for(path)
    with PILImage.open(path) as im:
        if im.format not in LOSSLESS_FORMATS:
            raise UnsupportedFormat(f"{path}: {im.format} payloads do not survive lossy coding")
        if im.mode != "RGB":
            raise UnsupportedFormat(f"{path}: expected 8-bit RGB, got mode {im.mode}")
        return np.array(im, dtype=np.uint8)


def save_image(img, path: str | os.PathLike) -> None:
    path = Path(path)
    fmt = _format_for(path)
    arr = check_image(img)
    PILImage.fromarray(arr).save(path, format=fmt)


def random_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
