"""Axis-aligned boxes, raster images, and the masking ops built on them.

Boxes use corner form (x1, y1, x2, y2) in pixel units with the origin at
the top-left corner, x rightward and y downward. Corners are strict:
x1 < x2 and y1 < y2, so every box has positive area. When a box selects
pixels the interval is half-open, [x1, x2) by [y1, y2): a pixel with
column index i is inside iff x1 <= i < x2, and likewise for rows.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import InvalidInputError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with strictly ordered float corners."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(isinstance(v, (int, float)) for v in vals):
            raise InvalidInputError(f"box corners must be numbers, got {vals!r}")
        if not all(math.isfinite(float(v)) for v in vals):
            raise InvalidInputError(f"box corners must be finite, got {vals!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise InvalidInputError(
                f"box corners must satisfy x1 < x2 and y1 < y2, got {vals!r}"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def scale(self, sx: float, sy: float) -> "Box":
        if sx <= 0 or sy <= 0:
            raise InvalidInputError(f"scale factors must be positive, got ({sx}, {sy})")
        return Box(self.x1 * sx, self.y1 * sy, self.x2 * sx, self.y2 * sy)

    def hflip(self, image_width: float) -> "Box":
        """Mirror across the vertical axis of an image of the given width."""
        return Box(image_width - self.x2, self.y1, image_width - self.x1, self.y2)

    @staticmethod
    def from_sequence(vals) -> "Box":
        vals = list(vals)
        if len(vals) != 4:
            raise InvalidInputError(f"box needs 4 coordinates, got {len(vals)}")
        return Box(float(vals[0]), float(vals[1]), float(vals[2]), float(vals[3]))


@dataclass
class Image:
    """Dense uint8 raster, channel-major (3, height, width), values 0..255."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(
                f"image dimensions must be positive, got {self.width}x{self.height}"
            )
        if not isinstance(self.pixels, np.ndarray):
            raise InvalidInputError("image pixels must be a numpy array")
        if self.pixels.dtype != np.uint8:
            raise InvalidInputError(f"image pixels must be uint8, got {self.pixels.dtype}")
        expected = (3, self.height, self.width)
        if self.pixels.shape != expected:
            raise InvalidInputError(
                f"image pixels must have shape {expected}, got {self.pixels.shape}"
            )

    @staticmethod
    def blank(width: int, height: int, fill: int = 0) -> "Image":
        px = np.full((3, height, width), fill, dtype=np.uint8)
        return Image(width, height, px)

    def copy(self) -> "Image":
        return Image(self.width, self.height, self.pixels.copy())

    def content_hash(self) -> str:
        """Stable identity: sha256 over dimensions and raw pixel bytes."""
        h = hashlib.sha256()
        h.update(f"{self.width}x{self.height}:".encode("ascii"))
        h.update(self.pixels.tobytes())
        return h.hexdigest()

    def to_png_bytes(self) -> bytes:
        arr = np.ascontiguousarray(self.pixels.transpose(1, 2, 0))
        buf = io.BytesIO()
        PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
        return buf.getvalue()

    @staticmethod
    def from_png_bytes(data: bytes) -> "Image":
        try:
            pil = PILImage.open(io.BytesIO(data))
            pil = pil.convert("RGB")
        except Exception as exc:
            raise InvalidInputError(f"cannot decode PNG payload: {exc}") from exc
        arr = np.asarray(pil, dtype=np.uint8)
        px = np.ascontiguousarray(arr.transpose(2, 0, 1))
        return Image(pil.width, pil.height, px)

    def contains_box(self, box: Box) -> bool:
        return box.x1 >= 0 and box.y1 >= 0 and box.x2 <= self.width and box.y2 <= self.height


def box_area(box: Box) -> float:
    """Area of a box; positive by construction."""
    return box.width * box.height


def _intersection_area(a: Box, b: Box) -> float:
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0 or iy <= 0:
        return 0.0
    return ix * iy


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes.

    Degenerate overlap (edge or corner touching, or disjoint) yields
    exactly 0.0. The result is always within [0, 1].
    """
    inter = _intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = box_area(a) + box_area(b) - inter
    return inter / union


def enclosing_box(a: Box, b: Box) -> Box:
    return Box(
        min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2)
    )


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: IoU minus the fraction of the smallest enclosing
    box not covered by the union.

    Bounded by (-1, 1]; equals IoU when one box contains the other and
    equals 1.0 exactly for identical boxes.
    """
    inter = _intersection_area(a, b)
    union = box_area(a) + box_area(b) - inter
    enc = box_area(enclosing_box(a, b))
    i = inter / union if inter > 0.0 else 0.0
    return i - (enc - union) / enc


def clip_box(box: Box, width: float, height: float) -> Box:
    """Clip a box to image bounds.

    Raises:
        InvalidInputError: if the clipped region is empty (the box lies
            entirely outside the image).
    """
    x1 = max(box.x1, 0.0)
    y1 = max(box.y1, 0.0)
    x2 = min(box.x2, float(width))
    y2 = min(box.y2, float(height))
    if x1 >= x2 or y1 >= y2:
        raise InvalidInputError(
            f"box {box} lies outside a {width}x{height} image after clipping"
        )
    return Box(x1, y1, x2, y2)


def box_pixel_mask(box: Box, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of pixels inside the box.

    A pixel (i, j) with column i and row j is kept iff x1 <= i < x2 and
    y1 <= j < y2.
    """
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    in_x = (cols >= box.x1) & (cols < box.x2)
    in_y = (rows >= box.y1) & (rows < box.y2)
    return in_y[:, None] & in_x[None, :]


def union_mask(image: Image, b_h: Box, b_o: Box) -> Image:
    """Zero out every pixel outside the union of the two boxes.

    Both boxes are clipped to the image first; a box entirely outside
    the image is an error. Pixels inside either clipped box keep their
    values, all others become 0 in every channel.

    Returns:
        A new Image of the same size; the input is not modified.
    """
    ch = clip_box(b_h, image.width, image.height)
    co = clip_box(b_o, image.width, image.height)
    mask = box_pixel_mask(ch, image.width, image.height) | box_pixel_mask(
        co, image.width, image.height
    )
    out = image.pixels * mask[None, :, :].astype(np.uint8)
    return Image(image.width, image.height, out.astype(np.uint8))
