"""Invertible image augmentation with full parameter recording.

Three flavours are used by the training loop: a weak transform (maybe
flip, bounded resize), a strong transform (weak geometry plus
photometric perturbations), and a conditional pre-pad applied to
synthetic images whose person box covers more than half the canvas.
Every application returns a TransformRecord listing its primitive
steps; geometric steps invert exactly, photometric steps never touch a
coordinate, and records serialize to JSON for audit logs.

Label transport between two augmented views of the same source runs a
box through one record's inverse and the other's geometric forward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .amf import PseudoLabelSet, Triplet
from .errors import InvalidInputError, ParseError
from .geometry import Box, Image, box_area

PAD_FILL = 128


# ---------------------------------------------------------------------------
# primitive steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResizeStep:
    """Scale by (sx, sy); out_w/out_h pin the integer raster size."""

    sx: float
    sy: float
    out_w: int
    out_h: int

    def apply_box(self, box: Box) -> Box:
        return box.scale(self.sx, self.sy)

    def invert_box(self, box: Box) -> Box:
        return box.scale(1.0 / self.sx, 1.0 / self.sy)

    def apply_size(self, w: int, h: int) -> tuple:
        return self.out_w, self.out_h

    def to_json(self) -> dict:
        return {"kind": "resize", "sx": self.sx, "sy": self.sy,
                "out_w": self.out_w, "out_h": self.out_h}


@dataclass(frozen=True)
class HFlipStep:
    """Mirror horizontally; width is the raster width when flipped."""

    width: int

    def apply_box(self, box: Box) -> Box:
        return box.hflip(float(self.width))

    def invert_box(self, box: Box) -> Box:
        return box.hflip(float(self.width))

    def apply_size(self, w: int, h: int) -> tuple:
        return w, h

    def to_json(self) -> dict:
        return {"kind": "hflip", "width": self.width}


@dataclass(frozen=True)
class PadStep:
    """Add margins; boxes shift by the top-left margin."""

    left: int
    top: int
    right: int
    bottom: int

    def apply_box(self, box: Box) -> Box:
        return box.translate(float(self.left), float(self.top))

    def invert_box(self, box: Box) -> Box:
        return box.translate(-float(self.left), -float(self.top))

    def apply_size(self, w: int, h: int) -> tuple:
        return w + self.left + self.right, h + self.top + self.bottom

    def to_json(self) -> dict:
        return {"kind": "pad", "left": self.left, "top": self.top,
                "right": self.right, "bottom": self.bottom}


@dataclass(frozen=True)
class PhotometricStep:
    """Pixel-value-only perturbation; carries no box effect."""

    tag: str
    params: tuple = ()

    def apply_box(self, box: Box) -> Box:
        return box

    def invert_box(self, box: Box) -> Box:
        return box

    def apply_size(self, w: int, h: int) -> tuple:
        return w, h

    def to_json(self) -> dict:
        return {"kind": "photometric", "tag": self.tag,
                "params": list(self.params)}


_STEP_KINDS = {"resize", "hflip", "pad", "photometric"}


def _step_from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "resize":
        return ResizeStep(float(obj["sx"]), float(obj["sy"]),
                          int(obj["out_w"]), int(obj["out_h"]))
    if kind == "hflip":
        return HFlipStep(int(obj["width"]))
    if kind == "pad":
        return PadStep(int(obj["left"]), int(obj["top"]),
                       int(obj["right"]), int(obj["bottom"]))
    if kind == "photometric":
        return PhotometricStep(str(obj["tag"]), tuple(obj.get("params", ())))
    raise ParseError(f"unknown transform step kind {kind!r}")


@dataclass
class TransformRecord:
    """An ordered list of primitive steps applied to one source image."""

    source_size: tuple  # (width, height)
    steps: list = field(default_factory=list)

    def apply_box(self, box: Box) -> Box:
        for step in self.steps:
            box = step.apply_box(box)
        return box

    def invert_box(self, box: Box) -> Box:
        for step in reversed(self.steps):
            box = step.invert_box(box)
        return box

    def output_size(self) -> tuple:
        w, h = int(self.source_size[0]), int(self.source_size[1])
        for step in self.steps:
            w, h = step.apply_size(w, h)
        return w, h

    def geometric(self) -> "TransformRecord":
        """The record with photometric steps removed; same box effect."""
        return TransformRecord(
            source_size=self.source_size,
            steps=[s for s in self.steps if not isinstance(s, PhotometricStep)],
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "source_size": [int(self.source_size[0]), int(self.source_size[1])],
                "steps": [s.to_json() for s in self.steps],
            },
            sort_keys=True, separators=(",", ":"),
        )

    @staticmethod
    def from_json(text: str) -> "TransformRecord":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"transform record is not valid JSON: {exc}") from exc
        src = obj.get("source_size")
        if not isinstance(src, list) or len(src) != 2:
            raise ParseError("transform record missing source_size")
        return TransformRecord(
            source_size=(int(src[0]), int(src[1])),
            steps=[_step_from_json(s) for s in obj.get("steps", [])],
        )


# ---------------------------------------------------------------------------
# raster ops
# ---------------------------------------------------------------------------


def resize_raster(image: Image, out_w: int, out_h: int) -> Image:
    """Nearest-neighbor resize."""
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"target size must be positive, got {out_w}x{out_h}")
    ys = np.minimum(
        (np.arange(out_h) + 0.5) * image.height / out_h, image.height - 1
    ).astype(np.int64)
    xs = np.minimum(
        (np.arange(out_w) + 0.5) * image.width / out_w, image.width - 1
    ).astype(np.int64)
    px = image.pixels[:, ys[:, None], xs[None, :]]
    return Image(out_w, out_h, np.ascontiguousarray(px))


def hflip_raster(image: Image) -> Image:
    return Image(image.width, image.height,
                 np.ascontiguousarray(image.pixels[:, :, ::-1]))


def pad_raster(image: Image, left: int, top: int, right: int, bottom: int,
               fill: int = PAD_FILL) -> Image:
    if min(left, top, right, bottom) < 0:
        raise InvalidInputError("pad margins must be non-negative")
    out = np.full(
        (3, image.height + top + bottom, image.width + left + right),
        fill, dtype=np.uint8,
    )
    out[:, top : top + image.height, left : left + image.width] = image.pixels
    return Image(image.width + left + right, image.height + top + bottom, out)


def jitter_raster(image: Image, delta: int) -> Image:
    px = np.clip(image.pixels.astype(np.int16) + int(delta), 0, 255)
    return Image(image.width, image.height, px.astype(np.uint8))


def blur_raster(image: Image) -> Image:
    """3x3 box blur per channel."""
    px = ndimage.uniform_filter(
        image.pixels.astype(np.float64), size=(1, 3, 3), mode="nearest"
    )
    return Image(image.width, image.height,
                 np.clip(np.rint(px), 0, 255).astype(np.uint8))


def erase_raster(image: Image, x: int, y: int, w: int, h: int,
                 fill: int = PAD_FILL) -> Image:
    px = image.pixels.copy()
    px[:, y : y + h, x : x + w] = fill
    return Image(image.width, image.height, px)


# ---------------------------------------------------------------------------
# composed transforms
# ---------------------------------------------------------------------------


def _geometric_draws(image: Image, rng: np.random.Generator, flip_prob: float,
                     scale_range: tuple):
    """Draw flip and scale; always consumes the same number of draws."""
    u_flip = rng.random()
    s = rng.uniform(scale_range[0], scale_range[1])
    steps = []
    out = image
    if u_flip < flip_prob:
        out = hflip_raster(out)
        steps.append(HFlipStep(width=image.width))
    out_w = max(1, int(round(image.width * s)))
    out_h = max(1, int(round(image.height * s)))
    sx = out_w / image.width
    sy = out_h / image.height
    out = resize_raster(out, out_w, out_h)
    steps.append(ResizeStep(sx=sx, sy=sy, out_w=out_w, out_h=out_h))
    return out, steps


def apply_weak(image: Image, boxes: list, seed: int, flip_prob: float = 0.5,
               scale_range: tuple = (0.8, 1.2)):
    """Flip with probability flip_prob, then a bounded random resize.

    Returns:
        (image', boxes', record); boxes' are the inputs mapped through
        the record, and the record inverts the mapping exactly.
    """
    rng = np.random.default_rng(seed)
    out, steps = _geometric_draws(image, rng, flip_prob, scale_range)
    record = TransformRecord(source_size=(image.width, image.height), steps=steps)
    return out, [record.apply_box(b) for b in boxes], record


def apply_strong(image: Image, boxes: list, seed: int, flip_prob: float = 0.5,
                 scale_range: tuple = (0.8, 1.2), jitter: int = 3,
                 blur_prob: float = 0.3, erase_prob: float = 0.3):
    """Weak-style geometry plus photometric perturbations.

    Photometric steps (intensity jitter, blur, erase) are recorded with
    their parameters but have no effect on boxes; box transport through
    the returned record equals its geometric projection.
    """
    rng = np.random.default_rng(seed)
    out, steps = _geometric_draws(image, rng, flip_prob, scale_range)

    delta = int(rng.integers(-jitter, jitter + 1)) if jitter > 0 else 0
    if delta != 0:
        out = jitter_raster(out, delta)
        steps.append(PhotometricStep(tag="jitter", params=(delta,)))
    if rng.random() < blur_prob:
        out = blur_raster(out)
        steps.append(PhotometricStep(tag="blur3", params=()))
    if rng.random() < erase_prob:
        ew = max(1, int(rng.integers(2, max(3, out.width // 4 + 1))))
        eh = max(1, int(rng.integers(2, max(3, out.height // 4 + 1))))
        ex = int(rng.integers(0, out.width - ew + 1))
        ey = int(rng.integers(0, out.height - eh + 1))
        out = erase_raster(out, ex, ey, ew, eh)
        steps.append(PhotometricStep(tag="erase", params=(ex, ey, ew, eh)))
    record = TransformRecord(source_size=(image.width, image.height), steps=steps)
    return out, [record.apply_box(b) for b in boxes], record


def random_pad(image: Image, ann, p: float, seed: int):
    """Conditionally pad a synthetic image to shrink a dominant person box.

    Pads iff the annotation's person box covers more than half the image
    area and p <= 0.5. Margins are drawn uniformly in [0, dimension/2]
    per side, the fill is mid-gray, and both annotation boxes shift by
    (left, top). Otherwise the inputs come back unchanged.

    Returns:
        (image', ann', applied)
    """
    if not (0.0 <= p <= 1.0):
        raise InvalidInputError(f"p must lie in [0, 1], got {p}")
    area_ratio = box_area(ann.b_h) / (image.width * image.height)
    if not (area_ratio > 0.5 and p <= 0.5):
        return image, ann, False
    rng = np.random.default_rng(seed)
    left = int(rng.integers(0, image.width // 2 + 1))
    right = int(rng.integers(0, image.width // 2 + 1))
    top = int(rng.integers(0, image.height // 2 + 1))
    bottom = int(rng.integers(0, image.height // 2 + 1))
    out = pad_raster(image, left, top, right, bottom)
    moved = type(ann)(
        c_a=ann.c_a, c_o=ann.c_o,
        b_h=ann.b_h.translate(float(left), float(top)),
        b_o=ann.b_o.translate(float(left), float(top)),
    )
    return out, moved, True


def transfer_labels(pseudo: PseudoLabelSet, weak_record: TransformRecord,
                    strong_record: TransformRecord) -> PseudoLabelSet:
    """Map pseudo-label boxes from the weak view into the strong view.

    Boxes go through the weak record's inverse and then the strong
    record's geometric forward; interaction bits and classes are
    untouched.

    Raises:
        InvalidInputError: when the two records disagree on the source
            image size (they must describe views of the same image).
    """
    if tuple(weak_record.source_size) != tuple(strong_record.source_size):
        raise InvalidInputError(
            f"record mismatch: weak source {weak_record.source_size} vs "
            f"strong source {strong_record.source_size}"
        )
    strong_geo = strong_record.geometric()
    out = []
    for t in pseudo.triplets:
        b_h = strong_geo.apply_box(weak_record.invert_box(t.b_h))
        b_o = strong_geo.apply_box(weak_record.invert_box(t.b_o))
        out.append(
            Triplet(interactions=t.interactions.copy(), c_o=t.c_o,
                    b_h=b_h, b_o=b_o, corrected=t.corrected)
        )
    return PseudoLabelSet(triplets=out, tau_bin=pseudo.tau_bin)
