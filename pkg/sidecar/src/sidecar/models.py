"""Procedural reference models behind the sidecar routes.

Each class has the call surface a real pretrained-model adapter would
have, but computes its output deterministically from pixel statistics
or hashed inputs, so the service runs anywhere and twice-run requests
give identical answers. A registry maps configured model names to
factories; an unknown name raises ModelLoadError, which makes the
service refuse to start rather than serve half a model set.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from vil.geometry import Box, Image


class ModelLoadError(Exception):
    """A configured model cannot be constructed."""


def _rng_from(*parts) -> np.random.Generator:
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


class ProceduralGenerator:
    """Text-to-image stand-in: renders a tinted canvas with rectangles.

    The raster is a pure function of (prompt, seed), so a fixed seed
    reproduces the image byte for byte.
    """

    name = "proc-gen-v1"

    def __init__(self, width: int = 64, height: int = 64):
        if not (16 <= int(width) <= 1024 and 16 <= int(height) <= 1024):
            raise ModelLoadError(
                f"generator canvas must be 16..1024 per side, got {width}x{height}"
            )
        self.width = int(width)
        self.height = int(height)

    def generate(self, prompt: str, seed: int) -> Image:
        rng = _rng_from("gen", self.name, prompt, int(seed))
        w, h = self.width, self.height
        base = rng.integers(32, 224, size=(3, 1, 1))
        ramp = np.linspace(-20.0, 20.0, w).round().astype(np.int64)
        px = np.broadcast_to(base, (3, h, w)) + ramp[None, None, :]
        px = np.clip(px, 0, 255)
        canvas = px.astype(np.uint8).copy()
        for _ in range(int(rng.integers(2, 5))):
            x1 = int(rng.integers(0, w - 8))
            y1 = int(rng.integers(0, h - 8))
            x2 = min(w, x1 + int(rng.integers(4, max(6, w // 3))))
            y2 = min(h, y1 + int(rng.integers(4, max(6, h // 3))))
            color = rng.integers(0, 256, size=3)
            for c in range(3):
                canvas[c, y1:y2, x1:x2] = int(color[c])
        return Image(w, h, canvas)


class ProceduralSceneModel:
    """Scene embedder: channel statistics over a fixed coarse pooling.

    The input is resampled to an 8x8 grid before pooling, so the output
    dimension is constant for any image size.
    """

    name = "proc-scene-v1"
    pool = 8
    grid = 2

    @property
    def embed_dim(self) -> int:
        return 6 + 3 * self.grid * self.grid

    def embed(self, image: Image) -> np.ndarray:
        px = image.pixels.astype(np.float64) / 255.0
        ry = np.linspace(0, image.height - 1, self.pool).round().astype(int)
        rx = np.linspace(0, image.width - 1, self.pool).round().astype(int)
        small = px[:, ry][:, :, rx]
        parts = [px.mean(axis=(1, 2)), px.std(axis=(1, 2))]
        for rows in np.array_split(small, self.grid, axis=1):
            for cell in np.array_split(rows, self.grid, axis=2):
                parts.append(cell.mean(axis=(1, 2)))
        return np.concatenate(parts)


class ProceduralDetector:
    """Detector stand-in: one whole-image box plus a grid of cell boxes.

    Every cell is reported regardless of score; thresholding is the
    client's job. The checkpoint identity is part of the published
    model string.
    """

    name = "proc-det-v1"
    checkpoint = "ref-2026-01"
    grid = 3

    @property
    def identity(self) -> str:
        return f"{self.name}@{self.checkpoint}"

    def detect(self, image: Image) -> list:
        px = image.pixels.astype(np.float64) / 255.0
        w, h = float(image.width), float(image.height)
        global_mean = px.mean(axis=(1, 2))
        out = [(
            int(np.argmax(global_mean)),
            float(np.clip(px.std() * 2.0, 0.0, 1.0)),
            Box(0.0, 0.0, w, h),
        )]
        ys = np.linspace(0, image.height, self.grid + 1).round().astype(int)
        xs = np.linspace(0, image.width, self.grid + 1).round().astype(int)
        for iy in range(self.grid):
            for ix in range(self.grid):
                y1, y2 = int(ys[iy]), int(ys[iy + 1])
                x1, x2 = int(xs[ix]), int(xs[ix + 1])
                if y2 <= y1 or x2 <= x1:
                    continue
                dev = px[:, y1:y2, x1:x2].mean(axis=(1, 2)) - global_mean
                label = int(np.argmax(np.abs(dev)))
                score = float(np.clip(np.abs(dev).max() * 3.0, 0.0, 1.0))
                out.append((label, score,
                            Box(float(x1), float(y1), float(x2), float(y2))))
        return out


class ProceduralVLScorer:
    """Image-text scorer: cosine between pixel stats and a hashed text
    vector, mapped into [0, 1] by the declared monotone transform
    ((raw + 1) / 2, published as "affine01" in the health route).
    """

    name = "proc-vl-v1"
    transform = "affine01"

    def raw_similarity(self, image: Image, text: str) -> float:
        px = image.pixels.astype(np.float64) / 255.0
        img_vec = np.concatenate([px.mean(axis=(1, 2)), px.std(axis=(1, 2))])
        norm = float(np.linalg.norm(img_vec))
        if norm == 0.0:
            return 0.0
        txt_vec = _rng_from("vl-text", self.name, text).standard_normal(6)
        txt_vec /= np.linalg.norm(txt_vec)
        return float(np.clip(img_vec / norm @ txt_vec, -1.0, 1.0))

    def score(self, image: Image, text: str) -> float:
        raw = self.raw_similarity(image, text)
        return float(np.clip((raw + 1.0) / 2.0, 0.0, 1.0))


GENERATORS = {ProceduralGenerator.name: ProceduralGenerator}
SCENE_MODELS = {ProceduralSceneModel.name: ProceduralSceneModel}
DETECTORS = {ProceduralDetector.name: ProceduralDetector}
VL_SCORERS = {ProceduralVLScorer.name: ProceduralVLScorer}

DEFAULT_CONFIG = {
    "generator": ProceduralGenerator.name,
    "scene": ProceduralSceneModel.name,
    "detector": ProceduralDetector.name,
    "vl": ProceduralVLScorer.name,
    "width": 64,
    "height": 64,
}


@dataclass(frozen=True)
class ModelSet:
    generator: ProceduralGenerator
    scene: ProceduralSceneModel
    detector: ProceduralDetector
    vl: ProceduralVLScorer

    def identities(self) -> dict:
        return {
            "generator": self.generator.name,
            "scene": self.scene.name,
            "detector": self.detector.identity,
            "vl": self.vl.name,
        }


def _pick(registry: dict, role: str, name):
    if name not in registry:
        raise ModelLoadError(
            f"unknown {role} model {name!r}; known: {sorted(registry)}"
        )
    return registry[name]


def load_models(config: dict = None) -> ModelSet:
    """Build the model set a configuration asks for.

    Unknown model names raise ModelLoadError so a misconfigured service
    never starts. Extra config keys are ignored (the same file may
    carry serving options).
    """
    if config is None:
        config = {}
    if not isinstance(config, dict):
        raise ModelLoadError("model config must be a JSON object")
    cfg = dict(DEFAULT_CONFIG)
    cfg.update(config)
    generator = _pick(GENERATORS, "generator", cfg["generator"])(
        width=cfg["width"], height=cfg["height"])
    scene = _pick(SCENE_MODELS, "scene", cfg["scene"])()
    detector = _pick(DETECTORS, "detector", cfg["detector"])()
    vl = _pick(VL_SCORERS, "vl", cfg["vl"])()
    return ModelSet(generator=generator, scene=scene, detector=detector, vl=vl)
