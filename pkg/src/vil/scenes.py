"""Procedural toy scenes: drawing, decoding, and a simple color embedding.

A toy scene is a noisy background with flat colored rectangles on it.
Person rectangles use a high red channel and objects a high blue
channel; the green channel encodes a class index on a coarse ladder, so
a decoder can recover classes exactly even under mild photometric
perturbation (up to +/-3 intensity). These scenes give every
model-dependent stage a cheap, fully deterministic stand-in.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidInputError
from .geometry import Box, Image

PERSON_PRIMARY = 220  # red level of person rectangles
OBJECT_PRIMARY = 220  # blue level of object rectangles
SECONDARY_LOW = 30  # the opposite primary channel inside a rectangle
CLASS_G_BASE = 40
CLASS_G_STEP = 8
MAX_CLASS_INDEX = (255 - CLASS_G_BASE) // CLASS_G_STEP
MIN_COMPONENT_AREA = 16
PRIMARY_THRESHOLD = 160
SECONDARY_THRESHOLD = 100


def class_to_green(idx: int) -> int:
    """Green level encoding a class index on the ladder."""
    if not (0 <= idx <= MAX_CLASS_INDEX):
        raise InvalidInputError(
            f"class index {idx} outside the drawable range 0..{MAX_CLASS_INDEX}"
        )
    return CLASS_G_BASE + CLASS_G_STEP * idx


def green_to_class(g: float) -> int:
    """Invert class_to_green, tolerating shifts up to half a step."""
    idx = int((float(g) - CLASS_G_BASE + CLASS_G_STEP / 2) // CLASS_G_STEP)
    return max(0, min(MAX_CLASS_INDEX, idx))


def seed_from(*parts) -> int:
    """Stable 63-bit seed derived from a tuple of printable parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def word_tint(word: str) -> tuple:
    """Small deterministic per-channel background offset for a scene word."""
    rng = np.random.default_rng(seed_from("tint", word))
    return tuple(int(v) for v in rng.integers(-25, 26, size=3))


def _paint(pixels: np.ndarray, box: Box, color: tuple):
    x1, y1, x2, y2 = (int(box.x1), int(box.y1), int(box.x2), int(box.y2))
    for c in range(3):
        pixels[c, y1:y2, x1:x2] = color[c]


def _separated(a: Box, b: Box) -> bool:
    """Whether two pixel boxes are disjoint with at least a 1px gap.

    The gap keeps same-colored rectangles from merging into a single
    connected component when the scene is decoded.
    """
    return (b.x2 <= a.x1 - 1 or b.x1 >= a.x2 + 1 or
            b.y2 <= a.y1 - 1 or b.y1 >= a.y2 + 1)


def _fallback_box(person: Box, width: int, height: int) -> Box:
    """Deterministic object placement in the widest strip beside a person.

    Used when rejection sampling fails; the person covers at most half
    of each canvas dimension, so some strip is always wide enough.
    """
    strips = [
        ("left", person.x1 - 1.0),
        ("right", width - person.x2 - 1.0),
        ("top", person.y1 - 1.0),
        ("bottom", height - person.y2 - 1.0),
    ]
    side, thick = max(strips, key=lambda s: s[1])
    thick = int(thick)
    if side in ("left", "right"):
        ow = max(2, min(max(4, int(0.2 * width)), thick))
        oh = max(2, min(max(4, int(0.2 * height)), height))
        x1 = 0 if side == "left" else int(person.x2) + 1
        y1 = 0
    else:
        ow = max(2, min(max(4, int(0.2 * width)), width))
        oh = max(2, min(max(4, int(0.2 * height)), thick))
        x1 = 0
        y1 = 0 if side == "top" else int(person.y2) + 1
    return Box(float(x1), float(y1), float(x1 + ow), float(y1 + oh))


def _sample_box(rng: np.random.Generator, width: int, height: int,
                lo: float, hi: float) -> Box:
    w = int(rng.integers(max(4, int(lo * width)), max(5, int(hi * width)) + 1))
    h = int(rng.integers(max(4, int(lo * height)), max(5, int(hi * height)) + 1))
    w = min(w, width - 1)
    h = min(h, height - 1)
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return Box(float(x), float(y), float(x + w), float(y + h))


def draw_scene(c_a: int, c_o: int, width: int, height: int,
               rng: np.random.Generator, tint: tuple = (0, 0, 0)) -> tuple:
    """Render a person and an object rectangle on a tinted noisy background.

    The person rectangle's green channel encodes the interaction class;
    the object rectangle's green channel encodes the object class. An
    object class of 0 stands for a second person and is drawn in person
    colors carrying the same interaction code. The rectangles never
    touch (at least a 1px gap), so decoding recovers both boxes exactly.

    Returns:
        (image, person_box, object_box)
    """
    if width < 16 or height < 16:
        raise InvalidInputError(f"scene canvas too small: {width}x{height}")
    base = np.empty((3, height, width), dtype=np.int16)
    for c in range(3):
        level = 100 + tint[c]
        base[c] = level
    noise = rng.integers(-8, 9, size=(3, height, width), dtype=np.int16)
    base = np.clip(base + noise, 0, 255)

    person = _sample_box(rng, width, height, 0.25, 0.5)
    obj = None
    for _ in range(64):
        cand = _sample_box(rng, width, height, 0.2, 0.45)
        if _separated(person, cand):
            obj = cand
            break
    if obj is None:
        obj = _fallback_box(person, width, height)
    pixels = base.astype(np.uint8)
    _paint(pixels, person, (PERSON_PRIMARY, class_to_green(c_a), SECONDARY_LOW))
    if c_o == 0:
        _paint(pixels, obj, (PERSON_PRIMARY, class_to_green(c_a), SECONDARY_LOW))
    else:
        _paint(pixels, obj, (SECONDARY_LOW, class_to_green(c_o), OBJECT_PRIMARY))
    return Image(width, height, pixels), person, obj


@dataclass
class Component:
    """A decoded rectangle: its kind, class code, extent, and pixel area."""

    kind: str  # "person" or "object"
    class_idx: int
    box: Box
    area: int


def decode_scene(image: Image) -> list:
    """Recover drawn rectangles from a toy scene.

    Connected regions of person-colored or object-colored pixels above a
    minimum area become components; the class index is decoded from the
    median green level. Components are returned sorted by (kind,
    descending area, x1, y1) so the order is deterministic.
    """
    px = image.pixels.astype(np.int16)
    r, g, b = px[0], px[1], px[2]
    person_mask = (r >= PRIMARY_THRESHOLD) & (b <= SECONDARY_THRESHOLD)
    object_mask = (b >= PRIMARY_THRESHOLD) & (r <= SECONDARY_THRESHOLD)
    out = []
    for kind, mask in (("person", person_mask), ("object", object_mask)):
        labels, count = ndimage.label(mask)
        for idx in range(1, count + 1):
            ys, xs = np.nonzero(labels == idx)
            area = int(xs.shape[0])
            if area < MIN_COMPONENT_AREA:
                continue
            box = Box(
                float(xs.min()), float(ys.min()),
                float(xs.max() + 1), float(ys.max() + 1),
            )
            med_g = float(np.median(g[ys, xs]))
            out.append(Component(kind=kind, class_idx=green_to_class(med_g),
                                 box=box, area=area))
    out.sort(key=lambda comp: (comp.kind, -comp.area, comp.box.x1, comp.box.y1))
    return out


GRID_CELLS = 4
GRID_DIM = GRID_CELLS * GRID_CELLS * 3


def grid_embedding(image: Image) -> np.ndarray:
    """Unit-norm spatial color embedding: per-cell channel means over a
    4x4 grid, plus a tiny floor so the norm is never zero."""
    px = image.pixels.astype(np.float64) / 255.0
    feats = np.empty(GRID_DIM, dtype=np.float64)
    k = 0
    ys = np.linspace(0, image.height, GRID_CELLS + 1).astype(int)
    xs = np.linspace(0, image.width, GRID_CELLS + 1).astype(int)
    for i in range(GRID_CELLS):
        for j in range(GRID_CELLS):
            cell = px[:, ys[i]:max(ys[i + 1], ys[i] + 1), xs[j]:max(xs[j + 1], xs[j] + 1)]
            for c in range(3):
                feats[k] = float(cell[c].mean())
                k += 1
    feats = feats + 1e-3
    return (feats / np.linalg.norm(feats)).astype(np.float64)
