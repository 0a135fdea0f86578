"""Line-delimited JSON containers and the record formats built on them.

Every artifact this package writes is a JSONL file whose first line is a
header object {"format": "vil/<name>", "version": 1, ...} and whose
remaining lines are records. Writers emit keys sorted and records in a
format-defined order, so rewriting the same data yields byte-identical
files. Headers may carry a "run" object (command, seed, effective
config) for reproducibility; no artifact ever embeds a timestamp, with
the single exception of rejection-log records.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import amf
from .errors import InvalidInputError, ParseError
from .geometry import Box, Image

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# generic container
# ---------------------------------------------------------------------------


def _to_jsonable(obj):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def dumps_record(obj: dict) -> str:
    """One canonical JSON line: sorted keys, compact separators."""
    return json.dumps(_to_jsonable(obj), sort_keys=True, separators=(",", ":"))


def write_jsonl(path, format_name: str, records: Iterable[dict],
                header_extra: Optional[dict] = None, run: Optional[dict] = None):
    """Write a header line followed by records, one JSON object per line."""
    header = {"format": f"vil/{format_name}", "version": FORMAT_VERSION}
    if header_extra:
        header.update(header_extra)
    if run is not None:
        header["run"] = run
    lines = [dumps_record(header)]
    lines.extend(dumps_record(r) for r in records)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_jsonl(path, format_name: str):
    """Read a JSONL container, checking the header.

    Returns:
        (header, records) where records is a list of dicts.

    Raises:
        ParseError: on malformed JSON, a wrong format tag, or an
            unsupported version; the message names the offending line.
    """
    if not os.path.exists(path):
        raise ParseError(f"{path}: file does not exist")
    records = []
    header = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            if header is None:
                header = obj
                got = obj.get("format")
                if got != f"vil/{format_name}":
                    raise ParseError(
                        f"{path}:1: expected format vil/{format_name}, got {got!r}"
                    )
                if obj.get("version") != FORMAT_VERSION:
                    raise ParseError(
                        f"{path}:1: unsupported version {obj.get('version')!r}"
                    )
            else:
                records.append(obj)
    if header is None:
        raise ParseError(f"{path}: empty file, missing header line")
    return header, records


def _need(record: dict, key: str, where: str):
    if key not in record:
        raise ParseError(f"{where}: missing key {key!r} in record {dumps_record(record)}")
    return record[key]


def _box_from_list(vals, where: str) -> Box:
    try:
        return Box.from_sequence(vals)
    except (InvalidInputError, TypeError) as exc:
        raise ParseError(f"{where}: bad box {vals!r} ({exc})") from exc


# ---------------------------------------------------------------------------
# vocabulary and manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocabulary:
    """Interaction and object class name lists; indices are 0-based."""

    interactions: tuple
    objects: tuple

    def __post_init__(self):
        if not self.interactions or not self.objects:
            raise InvalidInputError("vocabulary lists must be non-empty")
        for name in list(self.interactions) + list(self.objects):
            if not isinstance(name, str) or not name:
                raise InvalidInputError(f"vocabulary entries must be non-empty strings, got {name!r}")
        if len(set(self.interactions)) != len(self.interactions):
            raise InvalidInputError("duplicate interaction names")
        if len(set(self.objects)) != len(self.objects):
            raise InvalidInputError("duplicate object names")

    @property
    def n_interactions(self) -> int:
        return len(self.interactions)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @staticmethod
    def from_lists(interactions, objects) -> "Vocabulary":
        return Vocabulary(tuple(interactions), tuple(objects))


@dataclass
class ImageEntry:
    """One image row of a manifest."""

    id: str
    path: str
    width: int
    height: int
    provenance: Optional[dict] = None

    def to_record(self) -> dict:
        rec = {
            "kind": "image",
            "id": self.id,
            "path": self.path,
            "width": self.width,
            "height": self.height,
        }
        if self.provenance is not None:
            rec["provenance"] = self.provenance
        return rec


@dataclass
class AnnotationEntry:
    """One human-object interaction label attached to an image."""

    image_id: str
    c_a: int
    c_o: int
    b_h: Box
    b_o: Box

    def to_record(self) -> dict:
        return {
            "kind": "annotation",
            "image_id": self.image_id,
            "c_a": self.c_a,
            "c_o": self.c_o,
            "b_h": list(self.b_h.as_array()),
            "b_o": list(self.b_o.as_array()),
        }


@dataclass
class Manifest:
    """A dataset: vocabulary, image rows, and their annotations."""

    vocab: Vocabulary
    images: list = field(default_factory=list)
    annotations: list = field(default_factory=list)

    def image_by_id(self, image_id: str) -> ImageEntry:
        for entry in self.images:
            if entry.id == image_id:
                return entry
        raise InvalidInputError(f"manifest has no image {image_id!r}")

    def annotations_for(self, image_id: str):
        return [a for a in self.annotations if a.image_id == image_id]

    def validate(self, where: str = "manifest"):
        ids = [e.id for e in self.images]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})[0]
            raise ParseError(f"{where}: duplicate image id {dup!r}")
        known = set(ids)
        for ann in self.annotations:
            if ann.image_id not in known:
                raise ParseError(
                    f"{where}: annotation references unknown image {ann.image_id!r}"
                )
            if not (0 <= ann.c_a < self.vocab.n_interactions):
                raise ParseError(
                    f"{where}: annotation for image {ann.image_id!r} references "
                    f"interaction {ann.c_a} outside vocabulary of size {self.vocab.n_interactions}"
                )
            if not (0 <= ann.c_o < self.vocab.n_objects):
                raise ParseError(
                    f"{where}: annotation for image {ann.image_id!r} references "
                    f"object {ann.c_o} outside vocabulary of size {self.vocab.n_objects}"
                )
        for entry in self.images:
            if entry.width <= 0 or entry.height <= 0:
                raise ParseError(f"{where}: image {entry.id!r} has non-positive size")

    def save(self, path, run: Optional[dict] = None):
        self.validate()
        records = [
            {
                "kind": "vocab",
                "interactions": list(self.vocab.interactions),
                "objects": list(self.vocab.objects),
            }
        ]
        for entry in sorted(self.images, key=lambda e: e.id):
            records.append(entry.to_record())
        anns = sorted(
            enumerate(self.annotations),
            key=lambda pair: (pair[1].image_id, pair[0]),
        )
        for _, ann in anns:
            records.append(ann.to_record())
        write_jsonl(path, "manifest", records, run=run)

    @staticmethod
    def load(path) -> "Manifest":
        _, records = read_jsonl(path, "manifest")
        vocab = None
        images = []
        annotations = []
        for rec in records:
            kind = _need(rec, "kind", str(path))
            if kind == "vocab":
                if vocab is not None:
                    raise ParseError(f"{path}: multiple vocab records")
                vocab = Vocabulary.from_lists(
                    _need(rec, "interactions", str(path)),
                    _need(rec, "objects", str(path)),
                )
            elif kind == "image":
                images.append(
                    ImageEntry(
                        id=str(_need(rec, "id", str(path))),
                        path=str(_need(rec, "path", str(path))),
                        width=int(_need(rec, "width", str(path))),
                        height=int(_need(rec, "height", str(path))),
                        provenance=rec.get("provenance"),
                    )
                )
            elif kind == "annotation":
                annotations.append(
                    AnnotationEntry(
                        image_id=str(_need(rec, "image_id", str(path))),
                        c_a=int(_need(rec, "c_a", str(path))),
                        c_o=int(_need(rec, "c_o", str(path))),
                        b_h=_box_from_list(_need(rec, "b_h", str(path)), str(path)),
                        b_o=_box_from_list(_need(rec, "b_o", str(path)), str(path)),
                    )
                )
            else:
                raise ParseError(f"{path}: unknown record kind {kind!r}")
        if vocab is None:
            raise ParseError(f"{path}: manifest has no vocab record")
        manifest = Manifest(vocab=vocab, images=images, annotations=annotations)
        manifest.validate(where=str(path))
        return manifest


class FileImageProvider:
    """Loads manifest images from disk, resolving relative paths."""

    def __init__(self, base_dir):
        self.base_dir = str(base_dir)

    def load(self, entry: ImageEntry) -> Image:
        path = entry.path
        if not os.path.isabs(path):
            path = os.path.join(self.base_dir, path)
        if not os.path.exists(path):
            raise ParseError(f"image file {path} for id {entry.id!r} does not exist")
        with open(path, "rb") as f:
            img = Image.from_png_bytes(f.read())
        if img.width != entry.width or img.height != entry.height:
            raise ParseError(
                f"image {entry.id!r}: file is {img.width}x{img.height} but the "
                f"manifest declares {entry.width}x{entry.height}"
            )
        return img


class MemoryImageProvider:
    """Serves images from an in-memory id -> Image mapping."""

    def __init__(self, store: Optional[dict] = None):
        self.store = dict(store) if store else {}

    def add(self, image_id: str, image: Image):
        self.store[image_id] = image

    def load(self, entry: ImageEntry) -> Image:
        try:
            return self.store[entry.id]
        except KeyError:
            raise ParseError(f"no in-memory image for id {entry.id!r}") from None


# ---------------------------------------------------------------------------
# frequency tables
# ---------------------------------------------------------------------------

RARE_TRAIN_COUNT = 10


@dataclass
class FrequencyTable:
    """Training-set instance counts per (interaction, object) category."""

    counts: dict  # (c_a, c_o) -> int
    rare: dict  # (c_a, c_o) -> bool

    @staticmethod
    def from_counts(counts: dict, rare_below: int = RARE_TRAIN_COUNT) -> "FrequencyTable":
        cleaned = {}
        for key, val in counts.items():
            c_a, c_o = int(key[0]), int(key[1])
            val = int(val)
            if val < 0:
                raise InvalidInputError(f"negative count for category {key}")
            cleaned[(c_a, c_o)] = val
        rare = {k: v < rare_below for k, v in cleaned.items()}
        return FrequencyTable(cleaned, rare)

    @staticmethod
    def from_manifest(manifest: Manifest, rare_below: int = RARE_TRAIN_COUNT) -> "FrequencyTable":
        counts = {}
        for ann in manifest.annotations:
            counts[(ann.c_a, ann.c_o)] = counts.get((ann.c_a, ann.c_o), 0) + 1
        return FrequencyTable.from_counts(counts, rare_below=rare_below)

    def categories(self):
        return sorted(self.counts.keys())

    def save(self, path, run: Optional[dict] = None):
        records = [
            {"c_a": c_a, "c_o": c_o, "count": self.counts[(c_a, c_o)],
             "rare": self.rare[(c_a, c_o)]}
            for (c_a, c_o) in self.categories()
        ]
        write_jsonl(path, "frequency", records, run=run)

    @staticmethod
    def load(path) -> "FrequencyTable":
        _, records = read_jsonl(path, "frequency")
        counts, rare = {}, {}
        for rec in records:
            key = (int(_need(rec, "c_a", str(path))), int(_need(rec, "c_o", str(path))))
            if key in counts:
                raise ParseError(f"{path}: duplicate category {key}")
            counts[key] = int(_need(rec, "count", str(path)))
            rare[key] = bool(_need(rec, "rare", str(path)))
        return FrequencyTable(counts, rare)


# ---------------------------------------------------------------------------
# predictions and pseudo-labels
# ---------------------------------------------------------------------------


def save_predictions(path, preds_by_image: dict, run: Optional[dict] = None):
    """Write per-image prediction sets, sorted by image id.

    Args:
        preds_by_image: mapping image_id -> amf.PredictionSet. Score
            vectors must be finite; the in-memory override sentinel is
            never serialized.
    """
    records = []
    for image_id in sorted(preds_by_image.keys()):
        pset = preds_by_image[image_id]
        entries = []
        for entry in pset.entries:
            if not (np.all(np.isfinite(entry.s_a)) and np.all(np.isfinite(entry.s_o))):
                raise InvalidInputError(
                    f"prediction scores for image {image_id!r} contain non-finite "
                    "values; override sentinels are in-memory only"
                )
            entries.append(
                {
                    "b_h": list(entry.b_h.as_array()),
                    "b_o": list(entry.b_o.as_array()),
                    "s_a": [float(v) for v in entry.s_a],
                    "s_o": [float(v) for v in entry.s_o],
                }
            )
        records.append(
            {
                "image_id": image_id,
                "c_a_size": pset.n_interactions,
                "c_o_size": pset.n_objects,
                "entries": entries,
            }
        )
    write_jsonl(path, "predictions", records, run=run)


def load_predictions(path) -> dict:
    """Read prediction sets back as {image_id: amf.PredictionSet}."""
    _, records = read_jsonl(path, "predictions")
    out = {}
    for rec in records:
        image_id = str(_need(rec, "image_id", str(path)))
        if image_id in out:
            raise ParseError(f"{path}: duplicate predictions for image {image_id!r}")
        n_a = int(_need(rec, "c_a_size", str(path)))
        n_o = int(_need(rec, "c_o_size", str(path)))
        entries = []
        for ent in _need(rec, "entries", str(path)):
            entries.append(
                amf.PredictionEntry(
                    b_h=_box_from_list(_need(ent, "b_h", str(path)), str(path)),
                    b_o=_box_from_list(_need(ent, "b_o", str(path)), str(path)),
                    s_a=np.asarray(_need(ent, "s_a", str(path)), dtype=np.float64),
                    s_o=np.asarray(_need(ent, "s_o", str(path)), dtype=np.float64),
                )
            )
        try:
            out[image_id] = amf.PredictionSet(entries, n_a, n_o)
        except InvalidInputError as exc:
            raise ParseError(f"{path}: image {image_id!r}: {exc}") from exc
    return out


def save_pseudo_labels(path, labels_by_image: dict, tau_bin: float,
                       run: Optional[dict] = None):
    """Write pseudo-label sets, sorted by image id.

    The corrected entry's in-memory override score is represented by the
    boolean "corrected" flag, never as a numeric value.
    """
    records = []
    for image_id in sorted(labels_by_image.keys()):
        pls = labels_by_image[image_id]
        triplets = []
        for t in pls.triplets:
            triplets.append(
                {
                    "interactions": [int(v) for v in t.interactions],
                    "c_o": int(t.c_o),
                    "b_h": list(t.b_h.as_array()),
                    "b_o": list(t.b_o.as_array()),
                    "corrected": bool(t.corrected),
                }
            )
        records.append({"image_id": image_id, "triplets": triplets})
    write_jsonl(
        path, "pseudo_labels", records,
        header_extra={"tau_bin": float(tau_bin)}, run=run,
    )


def load_pseudo_labels(path):
    """Read pseudo-label sets; returns (tau_bin, {image_id: PseudoLabelSet})."""
    header, records = read_jsonl(path, "pseudo_labels")
    if "tau_bin" not in header:
        raise ParseError(f"{path}: header missing tau_bin")
    tau_bin = float(header["tau_bin"])
    out = {}
    for rec in records:
        image_id = str(_need(rec, "image_id", str(path)))
        triplets = []
        for t in _need(rec, "triplets", str(path)):
            triplets.append(
                amf.Triplet(
                    interactions=np.asarray(
                        _need(t, "interactions", str(path)), dtype=np.int64
                    ),
                    c_o=int(_need(t, "c_o", str(path))),
                    b_h=_box_from_list(_need(t, "b_h", str(path)), str(path)),
                    b_o=_box_from_list(_need(t, "b_o", str(path)), str(path)),
                    corrected=bool(t.get("corrected", False)),
                )
            )
        out[image_id] = amf.PseudoLabelSet(triplets=triplets, tau_bin=tau_bin)
    return tau_bin, out


# ---------------------------------------------------------------------------
# rejection logs
# ---------------------------------------------------------------------------


def save_rejections(path, records: list, run: Optional[dict] = None):
    """Write filter rejections sorted by (category, attempt).

    Each record: {"c_a", "c_o", "attempt", "prompt", "stage", "score",
    "timestamp"}. This is the only artifact allowed to carry timestamps.
    """
    ordered = sorted(
        records,
        key=lambda r: (r.get("c_a", -1), r.get("c_o", -1), r.get("attempt", -1)),
    )
    write_jsonl(path, "rejections", ordered, run=run)


def load_rejections(path) -> list:
    _, records = read_jsonl(path, "rejections")
    return records


# ---------------------------------------------------------------------------
# feature and score caches (written by tooling, read by the cache backend)
# ---------------------------------------------------------------------------


def write_feature_cache(index_path, bin_path, vectors: dict):
    """Persist {key: 1-D float32 vector} as an index JSONL plus a flat
    little-endian float32 binary."""
    keys = sorted(vectors.keys())
    dims = {np.asarray(vectors[k]).shape for k in keys}
    if len(dims) > 1:
        raise InvalidInputError(f"inconsistent feature dims: {sorted(dims)}")
    dim = int(next(iter(dims))[0]) if keys else 0
    records = []
    offset = 0
    blob = bytearray()
    for key in keys:
        vec = np.asarray(vectors[key], dtype="<f4")
        records.append({"key": key, "offset": offset, "length": int(vec.shape[0])})
        blob.extend(vec.tobytes())
        offset += int(vec.shape[0])
    write_jsonl(
        index_path, "feature_index", records,
        header_extra={"dim": dim, "dtype": "float32", "bin": os.path.basename(str(bin_path))},
    )
    with open(bin_path, "wb") as f:
        f.write(bytes(blob))


def read_feature_cache(index_path):
    """Load a feature cache; returns (dim, {key: float32 vector})."""
    header, records = read_jsonl(index_path, "feature_index")
    dim = int(header.get("dim", 0))
    bin_name = header.get("bin")
    if not isinstance(bin_name, str):
        raise ParseError(f"{index_path}: header missing bin file name")
    bin_path = os.path.join(os.path.dirname(str(index_path)), bin_name)
    if not os.path.exists(bin_path):
        raise ParseError(f"{index_path}: binary file {bin_path} does not exist")
    flat = np.fromfile(bin_path, dtype="<f4")
    out = {}
    for rec in records:
        key = str(_need(rec, "key", str(index_path)))
        off = int(_need(rec, "offset", str(index_path)))
        length = int(_need(rec, "length", str(index_path)))
        if dim and length != dim:
            raise ParseError(f"{index_path}: key {key!r} has length {length}, expected {dim}")
        if off + length > flat.shape[0]:
            raise ParseError(f"{index_path}: key {key!r} points past end of binary")
        out[key] = flat[off : off + length].copy()
    return dim, out


def write_detection_cache(path, detections_by_key: dict):
    """Persist {image_hash: [ {label, score, box} ]} sorted by key."""
    records = []
    for key in sorted(detections_by_key.keys()):
        dets = [
            {"label": int(d["label"]), "score": float(d["score"]),
             "box": [float(v) for v in d["box"]]}
            for d in detections_by_key[key]
        ]
        records.append({"key": key, "detections": dets})
    write_jsonl(path, "detection_cache", records)


def read_detection_cache(path) -> dict:
    _, records = read_jsonl(path, "detection_cache")
    out = {}
    for rec in records:
        key = str(_need(rec, "key", str(path)))
        out[key] = _need(rec, "detections", str(path))
    return out


def write_image_cache(path, paths_by_prompt: dict):
    """Persist {prompt: relative png path} sorted by prompt."""
    records = [
        {"key": k, "path": p} for k, p in sorted(paths_by_prompt.items())
    ]
    write_jsonl(path, "image_cache", records)


def write_vl_cache(path, scores: dict):
    """Persist {(image_hash, text): score} sorted by key then text."""
    records = [
        {"key": k, "text": t, "score": float(s)}
        for (k, t), s in sorted(scores.items())
    ]
    write_jsonl(path, "vl_cache", records)


def read_vl_cache(path) -> dict:
    _, records = read_jsonl(path, "vl_cache")
    out = {}
    for rec in records:
        out[(str(_need(rec, "key", str(path))), str(_need(rec, "text", str(path))))] = float(
            _need(rec, "score", str(path))
        )
    return out


# ---------------------------------------------------------------------------
# scene-word maps and prompt dumps
# ---------------------------------------------------------------------------


def save_scene_map(path, scene_map: dict, run: Optional[dict] = None):
    """Persist {(c_a, c_o): [scene words]} sorted by category."""
    records = [
        {"c_a": c_a, "c_o": c_o, "words": list(words)}
        for (c_a, c_o), words in sorted(scene_map.items())
    ]
    write_jsonl(path, "scene_map", records, run=run)


def load_scene_map(path) -> dict:
    _, records = read_jsonl(path, "scene_map")
    out = {}
    for rec in records:
        key = (int(_need(rec, "c_a", str(path))), int(_need(rec, "c_o", str(path))))
        words = _need(rec, "words", str(path))
        if not words:
            raise ParseError(f"{path}: category {key} has an empty word list")
        out[key] = [str(w) for w in words]
    return out


def save_prompts(path, prompts: list, run: Optional[dict] = None):
    """Persist prompt rows sorted by (category, attempt)."""
    ordered = sorted(prompts, key=lambda p: (p["c_a"], p["c_o"], p["attempt"]))
    write_jsonl(path, "prompts", ordered, run=run)


# ---------------------------------------------------------------------------
# external dataset import
# ---------------------------------------------------------------------------


def convert_coco_style(records: list, interactions, objects) -> Manifest:
    """Convert a COCO-flavoured interaction list into a Manifest.

    Each source record looks like {"file_name", "width", "height",
    "annotations": [{"bbox": [x1, y1, x2, y2], "category_id": int}],
    "hoi_annotation": [{"subject_id", "object_id", "category_id"}]},
    with ids indexing into "annotations" and category ids 0-based.

    Raises:
        ParseError: on dangling indices, out-of-range categories, or
            malformed boxes; the message names the record.
    """
    vocab = Vocabulary.from_lists(interactions, objects)
    images = []
    annotations = []
    for idx, rec in enumerate(records):
        where = f"record {idx}"
        fname = _need(rec, "file_name", where)
        image_id = str(rec.get("id", os.path.splitext(os.path.basename(fname))[0]))
        width = int(_need(rec, "width", where))
        height = int(_need(rec, "height", where))
        inst = _need(rec, "annotations", where)
        boxes = []
        for j, a in enumerate(inst):
            box = _box_from_list(_need(a, "bbox", f"{where} instance {j}"), f"{where} instance {j}")
            boxes.append((box, int(_need(a, "category_id", f"{where} instance {j}"))))
        for j, h in enumerate(_need(rec, "hoi_annotation", where)):
            si = int(_need(h, "subject_id", f"{where} hoi {j}"))
            oi = int(_need(h, "object_id", f"{where} hoi {j}"))
            c_a = int(_need(h, "category_id", f"{where} hoi {j}"))
            if not (0 <= si < len(boxes)) or not (0 <= oi < len(boxes)):
                raise ParseError(
                    f"{where} hoi {j}: subject/object index ({si}, {oi}) outside "
                    f"{len(boxes)} instances"
                )
            c_o = boxes[oi][1]
            if not (0 <= c_a < vocab.n_interactions):
                raise ParseError(f"{where} hoi {j}: interaction id {c_a} out of range")
            if not (0 <= c_o < vocab.n_objects):
                raise ParseError(f"{where} hoi {j}: object id {c_o} out of range")
            annotations.append(
                AnnotationEntry(
                    image_id=image_id, c_a=c_a, c_o=c_o,
                    b_h=boxes[si][0], b_o=boxes[oi][0],
                )
            )
        images.append(ImageEntry(id=image_id, path=fname, width=width, height=height))
    manifest = Manifest(vocab=vocab, images=images, annotations=annotations)
    manifest.validate(where="coco import")
    return manifest
