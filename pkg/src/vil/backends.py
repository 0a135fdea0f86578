"""Opaque model backends behind one interface.

Every model-dependent operation (image synthesis, scene embedding,
person/object detection, vision-language scoring) goes through a
Backend. Three implementations exist:

  * MockBackend - fully deterministic, in-process; outputs are pure
    functions of the call inputs and constructor state. Supports
    programmed lookup tables for tests and decode-based modes that
    understand procedural toy scenes.
  * CacheBackend - replays precomputed features and scores from disk
    and never touches the network; unknown keys raise
    MissingFeatureError.
  * RemoteBackend - speaks the JSON-over-HTTP wire protocol defined in
    vil.wire, with bounded in-flight requests and bounded retries.

Detection scores returned by detect() are already floored at the given
score_floor (weak inequality); any strict threshold comparison is the
caller's business.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests

from . import wire
from .errors import (
    ConfigError,
    InvalidInputError,
    MissingFeatureError,
    TransportError,
)
from .geometry import Box, Image
from .scenes import (
    GRID_DIM,
    decode_scene,
    draw_scene,
    grid_embedding,
    seed_from,
    word_tint,
)


@dataclass
class Detection:
    """One detected instance: object-class index, confidence, box."""

    label: int
    score: float
    box: Box

    def __post_init__(self):
        if self.label < 0:
            raise InvalidInputError(f"detection label must be >= 0, got {self.label}")
        if not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"detection score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class BackendDescriptor:
    """What a backend is: its kind, feature dimension, and a detail tag."""

    kind: str
    feature_dim: int
    detail: str = ""


class Backend:
    """Interface every backend implements."""

    def generate_image(self, prompt: str, seed: Optional[int] = None) -> Image:
        raise NotImplementedError

    def scene_embed(self, image: Image) -> np.ndarray:
        raise NotImplementedError

    def detect(self, image: Image, score_floor: float = 0.0) -> list:
        raise NotImplementedError

    def vl_score(self, image: Image, text: str) -> float:
        raise NotImplementedError

    def descriptor(self) -> BackendDescriptor:
        raise NotImplementedError


def _check_prompt(prompt: str):
    if not isinstance(prompt, str) or not prompt.strip():
        raise InvalidInputError("prompt must be a non-empty string")


def _check_text(text: str):
    if not isinstance(text, str) or not text.strip():
        raise InvalidInputError("text must be a non-empty string")


def _floor_detections(dets: list, score_floor: float) -> list:
    if not (0.0 <= score_floor <= 1.0):
        raise InvalidInputError(f"score floor must lie in [0, 1], got {score_floor}")
    return [d for d in dets if d.score >= score_floor]


# ---------------------------------------------------------------------------
# mock
# ---------------------------------------------------------------------------


class PromptGrammar:
    """Parses sentences of the form produced by the prompt builder:
    'a photo of a <human word> <interaction gerund> a <object> in the <scene>'.
    """

    def __init__(self, vocab, lexicon: dict, scene_words):
        self.vocab = vocab
        self.lexicon = dict(lexicon)
        self.scene_words = list(scene_words)
        # longest first so e.g. "sitting on" wins over "sitting"
        self._gerunds = sorted(
            ((self.lexicon[name], i) for i, name in enumerate(vocab.interactions)),
            key=lambda pair: -len(pair[0]),
        )

    def parse(self, text: str) -> tuple:
        """Return (c_a, c_o, scene_word, human_word) or raise InvalidInputError."""
        prefix = "a photo of "
        if not text.startswith(prefix) or " in the " not in text:
            raise InvalidInputError(f"prompt does not follow the template: {text!r}")
        body, scene_surface = text[len(prefix):].rsplit(" in the ", 1)
        scene_word = scene_surface.strip().replace(" ", "_")
        if scene_word not in self.scene_words:
            raise InvalidInputError(f"unknown scene word {scene_word!r} in prompt")
        for gerund, c_a in self._gerunds:
            marker = f" {gerund} "
            if marker in body:
                left, right = body.split(marker, 1)
                human = _strip_article(left)
                obj_surface = _strip_article(right)
                obj_name = obj_surface.replace(" ", "_")
                if obj_name not in self.vocab.objects:
                    raise InvalidInputError(f"unknown object {obj_name!r} in prompt")
                c_o = self.vocab.objects.index(obj_name)
                return c_a, c_o, scene_word, human
        raise InvalidInputError(f"no known interaction phrase in prompt: {text!r}")


def _strip_article(text: str) -> str:
    text = text.strip()
    for article in ("an ", "a "):
        if text.startswith(article):
            return text[len(article):].strip()
    return text


class MockBackend(Backend):
    """Deterministic in-process backend.

    Modes (per capability):
      * generate: "stamp" renders a hash-keyed noise canvas; "scene"
        parses the prompt and draws a procedural toy scene.
      * scene: "table" looks up programmed vectors by content hash
        (falling back to hash prototypes), "hash" always uses
        prototypes, "grid" embeds actual pixel statistics.
      * detect: "table" looks up programmed detections by content hash
        (missing keys yield no detections), "decode" decodes toy scenes.
      * vl: "table" looks up (hash, text) with a default for missing
        keys, "hash" draws uniform scores from the pair's digest,
        "decode" checks that the masked toy scene matches the sentence.

    All outputs are pure functions of (inputs, constructor arguments).
    """

    N_PROTOTYPES = 16

    def __init__(self, seed: int = 0, feature_dim: int = GRID_DIM,
                 scene_mode: str = "table", detect_mode: str = "table",
                 vl_mode: str = "table", generate_mode: str = "stamp",
                 canvas: tuple = (64, 64), default_vl_score: float = 0.0,
                 scene_table: Optional[dict] = None,
                 detection_table: Optional[dict] = None,
                 vl_table: Optional[dict] = None,
                 image_table: Optional[dict] = None,
                 grammar: Optional[PromptGrammar] = None):
        for mode, allowed in (
            (scene_mode, ("table", "hash", "grid")),
            (detect_mode, ("table", "decode")),
            (vl_mode, ("table", "hash", "decode")),
            (generate_mode, ("stamp", "scene")),
        ):
            if mode not in allowed:
                raise ConfigError(f"unknown mock mode {mode!r}; allowed: {allowed}")
        if generate_mode == "scene" and grammar is None:
            raise ConfigError("scene generation needs a prompt grammar")
        if vl_mode == "decode" and grammar is None:
            raise ConfigError("decode vl scoring needs a prompt grammar")
        self.seed = int(seed)
        self.feature_dim = int(feature_dim)
        self.scene_mode = scene_mode
        self.detect_mode = detect_mode
        self.vl_mode = vl_mode
        self.generate_mode = generate_mode
        self.canvas = (int(canvas[0]), int(canvas[1]))
        self.default_vl_score = float(default_vl_score)
        self.scene_table = dict(scene_table or {})
        self.detection_table = dict(detection_table or {})
        self.vl_table = dict(vl_table or {})
        self.image_table = dict(image_table or {})
        self.grammar = grammar

    @staticmethod
    def toy(vocab, lexicon: dict, scene_words, seed: int = 0,
            canvas: tuple = (64, 64)) -> "MockBackend":
        """The fully content-aware configuration used for end-to-end runs."""
        grammar = PromptGrammar(vocab, lexicon, scene_words)
        return MockBackend(
            seed=seed, feature_dim=GRID_DIM, scene_mode="grid",
            detect_mode="decode", vl_mode="decode", generate_mode="scene",
            canvas=canvas, grammar=grammar,
        )

    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(kind="mock", feature_dim=self.feature_dim,
                                 detail=f"{self.generate_mode}/{self.scene_mode}/"
                                        f"{self.detect_mode}/{self.vl_mode}")

    # -- generation --------------------------------------------------------

    def generate_image(self, prompt: str, seed: Optional[int] = None) -> Image:
        _check_prompt(prompt)
        if prompt in self.image_table:
            return self.image_table[prompt].copy()
        call_seed = seed_from("gen", self.seed, 0 if seed is None else int(seed), prompt)
        rng = np.random.default_rng(call_seed)
        if self.generate_mode == "scene":
            c_a, c_o, scene_word, _ = self.grammar.parse(prompt)
            tint = word_tint(scene_word)
            image, _, _ = draw_scene(c_a, c_o, self.canvas[0], self.canvas[1], rng, tint)
            return image
        px = rng.integers(0, 256, size=(3, self.canvas[1], self.canvas[0]), dtype=np.int64)
        return Image(self.canvas[0], self.canvas[1], px.astype(np.uint8))

    # -- scene embedding ---------------------------------------------------

    def _prototype(self, key: str) -> np.ndarray:
        idx = int(key[:8], 16) % self.N_PROTOTYPES
        rng = np.random.default_rng(seed_from("proto", self.seed, idx))
        vec = rng.standard_normal(self.feature_dim)
        return vec / np.linalg.norm(vec)

    def scene_embed(self, image: Image) -> np.ndarray:
        if self.scene_mode == "grid":
            return grid_embedding(image)
        key = image.content_hash()
        if self.scene_mode == "table" and key in self.scene_table:
            return np.asarray(self.scene_table[key], dtype=np.float64)
        return self._prototype(key)

    # -- detection ---------------------------------------------------------

    def detect(self, image: Image, score_floor: float = 0.0) -> list:
        key = image.content_hash()
        if self.detect_mode == "table":
            raw = self.detection_table.get(key, [])
            dets = [
                d if isinstance(d, Detection) else Detection(
                    label=int(d["label"]), score=float(d["score"]),
                    box=Box.from_sequence(d["box"]),
                )
                for d in raw
            ]
            return _floor_detections(dets, score_floor)
        dets = []
        for i, comp in enumerate(decode_scene(image)):
            u = np.random.default_rng(seed_from("det", self.seed, key, i)).random()
            score = 0.905 + 0.09 * u
            label = 0 if comp.kind == "person" else comp.class_idx
            dets.append(Detection(label=label, score=float(score), box=comp.box))
        return _floor_detections(dets, score_floor)

    # -- vision-language scoring -------------------------------------------

    def vl_score(self, image: Image, text: str) -> float:
        _check_text(text)
        key = image.content_hash()
        u = np.random.default_rng(seed_from("vl", self.seed, key, text)).random()
        if self.vl_mode == "table":
            return float(self.vl_table.get((key, text), self.default_vl_score))
        if self.vl_mode == "hash":
            return float(u)
        c_a, c_o, _, _ = self.grammar.parse(text)
        comps = decode_scene(image)
        persons = [c for c in comps if c.kind == "person"]
        have_person = any(c.class_idx == c_a for c in persons)
        if c_o == 0:
            have_object = sum(1 for c in persons if c.class_idx == c_a) >= 2
        else:
            have_object = any(
                c.kind == "object" and c.class_idx == c_o for c in comps
            )
        if have_person and have_object:
            return float(0.82 + 0.12 * u)
        return float(0.04 + 0.10 * u)


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


class CacheBackend(Backend):
    """Replays precomputed backend outputs from a cache directory.

    Layout: features.idx.jsonl + features.bin (required), and optional
    detections.jsonl, vl_scores.jsonl, images.jsonl (prompt -> PNG path).
    Performs no network I/O whatsoever; a lookup with no cached entry
    raises MissingFeatureError.
    """

    def __init__(self, cache_dir):
        from . import dataio  # local import keeps module dependencies one-way

        self.cache_dir = str(cache_dir)
        index = os.path.join(self.cache_dir, "features.idx.jsonl")
        if not os.path.exists(index):
            raise ConfigError(f"cache directory {self.cache_dir} has no features.idx.jsonl")
        self._dim, self._features = dataio.read_feature_cache(index)
        det_path = os.path.join(self.cache_dir, "detections.jsonl")
        self._detections = dataio.read_detection_cache(det_path) if os.path.exists(det_path) else {}
        vl_path = os.path.join(self.cache_dir, "vl_scores.jsonl")
        self._vl = dataio.read_vl_cache(vl_path) if os.path.exists(vl_path) else {}
        img_path = os.path.join(self.cache_dir, "images.jsonl")
        self._images = {}
        if os.path.exists(img_path):
            _, records = dataio.read_jsonl(img_path, "image_cache")
            for rec in records:
                self._images[str(rec["key"])] = str(rec["path"])

    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(kind="cache", feature_dim=self._dim, detail=self.cache_dir)

    def generate_image(self, prompt: str, seed: Optional[int] = None) -> Image:
        _check_prompt(prompt)
        rel = self._images.get(prompt)
        if rel is None:
            raise MissingFeatureError(f"no cached image for prompt {prompt!r}")
        path = os.path.join(self.cache_dir, rel)
        with open(path, "rb") as f:
            return Image.from_png_bytes(f.read())

    def scene_embed(self, image: Image) -> np.ndarray:
        key = image.content_hash()
        vec = self._features.get(key)
        if vec is None:
            raise MissingFeatureError(f"no cached scene feature for image {key[:12]}...")
        return np.asarray(vec, dtype=np.float64)

    def detect(self, image: Image, score_floor: float = 0.0) -> list:
        key = image.content_hash()
        raw = self._detections.get(key)
        if raw is None:
            raise MissingFeatureError(f"no cached detections for image {key[:12]}...")
        dets = [
            Detection(label=int(d["label"]), score=float(d["score"]),
                      box=Box.from_sequence(d["box"]))
            for d in raw
        ]
        return _floor_detections(dets, score_floor)

    def vl_score(self, image: Image, text: str) -> float:
        _check_text(text)
        key = (image.content_hash(), text)
        if key not in self._vl:
            raise MissingFeatureError(
                f"no cached vl score for image {key[0][:12]}... and text {text!r}"
            )
        return float(self._vl[key])


# ---------------------------------------------------------------------------
# remote
# ---------------------------------------------------------------------------


class RemoteBackend(Backend):
    """HTTP client for a model server speaking the vil.wire protocol.

    Bounded concurrency (a semaphore caps in-flight requests) and
    bounded retries: connection errors and 5xx responses are retried up
    to max_retries times; 4xx responses fail immediately. All failures
    surface as TransportError carrying attempt count, last status, and
    URL. Response bodies are schema-checked before use.
    """

    def __init__(self, base_url: str, timeout: float = 10.0, max_retries: int = 3,
                 max_inflight: int = 4, session: Optional[requests.Session] = None,
                 check_health: bool = True):
        if not base_url or not base_url.startswith(("http://", "https://")):
            raise ConfigError(f"remote backend needs an http(s) URL, got {base_url!r}")
        self.base_url = base_url.rstrip("/")
        self.timeout = float(timeout)
        self.max_retries = int(max_retries)
        if self.max_retries < 1:
            raise ConfigError("max_retries must be at least 1")
        self._semaphore = threading.BoundedSemaphore(int(max_inflight))
        self._session = session or requests.Session()
        self._health = None
        if check_health:
            self._health = self.health()

    def health(self) -> dict:
        url = f"{self.base_url}/health"
        try:
            resp = self._session.get(url, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(
                f"health check failed: {exc}", attempts=1, url=url
            ) from exc
        if resp.status_code != 200:
            raise TransportError(
                f"health check returned {resp.status_code}",
                attempts=1, status=resp.status_code, url=url,
            )
        payload = resp.json()
        wire._validate(wire.RESPONSE_SCHEMAS, "health", payload, "response")
        return payload

    def descriptor(self) -> BackendDescriptor:
        dim = int(self._health["feature_dim"]) if self._health else 0
        return BackendDescriptor(kind="remote", feature_dim=dim, detail=self.base_url)

    def _post(self, route: str, payload: dict) -> dict:
        wire.validate_request(route, payload)
        url = f"{self.base_url}/{route}"
        last_exc = None
        last_status = None
        attempts = 0
        with self._semaphore:
            for _ in range(self.max_retries):
                attempts += 1
                try:
                    resp = self._session.post(url, json=payload, timeout=self.timeout)
                except requests.RequestException as exc:
                    last_exc = exc
                    continue
                last_status = resp.status_code
                if resp.status_code >= 500:
                    continue
                if resp.status_code != 200:
                    raise TransportError(
                        f"{route} returned {resp.status_code}: {resp.text[:200]}",
                        attempts=attempts, status=resp.status_code, url=url,
                    )
                try:
                    body = resp.json()
                except ValueError as exc:
                    raise TransportError(
                        f"{route} returned a non-JSON body",
                        attempts=attempts, status=resp.status_code, url=url,
                    ) from exc
                wire.validate_response(route, body)
                return body
        raise TransportError(
            f"{route} failed after {attempts} attempts"
            + (f" (last status {last_status})" if last_status else f": {last_exc}"),
            attempts=attempts, status=last_status, url=url,
        )

    def generate_image(self, prompt: str, seed: Optional[int] = None) -> Image:
        _check_prompt(prompt)
        payload = {"prompt": prompt}
        if seed is not None:
            payload["seed"] = int(seed)
        body = self._post("generate", payload)
        return wire.decode_image(body["image"])

    def scene_embed(self, image: Image) -> np.ndarray:
        body = self._post("scene_embed", {"image": wire.encode_image(image)})
        return np.asarray(body["vector"], dtype=np.float64)

    def detect(self, image: Image, score_floor: float = 0.0) -> list:
        body = self._post("detect", {"image": wire.encode_image(image)})
        dets = [
            Detection(label=int(d["label"]), score=float(d["score"]),
                      box=Box.from_sequence(d["box"]))
            for d in body["detections"]
        ]
        return _floor_detections(dets, score_floor)

    def vl_score(self, image: Image, text: str) -> float:
        _check_text(text)
        body = self._post(
            "vl_score", {"image": wire.encode_image(image), "text": text}
        )
        return float(body["score"])
