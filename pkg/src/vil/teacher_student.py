"""Teacher-student training over real and synthesized images.

The student detector learns from three loss streams per step: pseudo-
labeled strong views of synthetic images, and strong plus weak views of
real images with ground truth. A teacher whose parameters are an
exponential moving average of the student's produces the predictions
that become pseudo-labels.

Each epoch runs in two phases. Phase one pads (conditionally), weakly
augments, and teacher-scores every synthetic image, pooling the
per-prediction best interaction scores; the adaptive threshold is the
order statistic of that pool. Phase two corrects each image's seed
annotation against the teacher predictions, binarizes survivors into
pseudo-labels, transports them into the strong view, and lets the
student take gradient steps; the teacher updates after every step.

A small fully differentiable detector over procedural scenes stands in
for a real model so the whole loop is checkable at desk scale.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import amf
from .augmentation import (
    TransformRecord,
    apply_strong,
    apply_weak,
    random_pad,
    transfer_labels,
)
from .errors import (
    ConfigError,
    InvalidInputError,
    InvalidStateError,
    ParseError,
    PhaseOrderError,
)
from .geometry import Box, Image, iou
from .scenes import decode_scene, seed_from


# ---------------------------------------------------------------------------
# EMA
# ---------------------------------------------------------------------------


@dataclass
class EMAState:
    """Teacher parameters and the averaging coefficient."""

    theta: np.ndarray
    alpha: float

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 1:
            raise InvalidStateError("teacher parameters must be a flat vector")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidStateError(f"alpha must lie in (0, 1), got {self.alpha}")


def ema_update(state: EMAState, theta_s: np.ndarray) -> EMAState:
    """One exponential-moving-average step toward the student.

    theta_t' = alpha * theta_t + (1 - alpha) * theta_s, elementwise.
    """
    theta_s = np.asarray(theta_s, dtype=np.float64)
    if theta_s.shape != state.theta.shape:
        raise InvalidStateError(
            f"parameter shape mismatch: teacher {state.theta.shape} vs "
            f"student {theta_s.shape}"
        )
    theta = state.alpha * state.theta + (1.0 - state.alpha) * theta_s
    return EMAState(theta=theta, alpha=state.alpha)


# ---------------------------------------------------------------------------
# detector contract and the toy implementation
# ---------------------------------------------------------------------------


class DetectorInterface:
    """Behavioral contract for detectors used by the training loop.

    predict(image) -> amf.PredictionSet            (deterministic given parameters)
    loss(preds, labels) -> non-negative float      (labels: list of amf.Triplet)
    loss_and_grad(image, labels) -> (float, grad)  (grad over the flat parameters)
    parameters() -> flat float vector (copy)
    load(vector)                                   (exact round-trip with parameters())
    trainable_mask() -> boolean vector marking classification-head parameters
    spawn(theta) -> a detector of the same shape loaded with theta
    """

    def predict(self, image: Image) -> amf.PredictionSet:
        raise NotImplementedError

    def loss(self, preds: amf.PredictionSet, labels: list) -> float:
        raise NotImplementedError

    def loss_and_grad(self, image: Image, labels: list):
        raise NotImplementedError

    def parameters(self) -> np.ndarray:
        raise NotImplementedError

    def load(self, theta: np.ndarray):
        raise NotImplementedError

    def trainable_mask(self) -> np.ndarray:
        raise NotImplementedError

    def spawn(self, theta: Optional[np.ndarray] = None) -> "DetectorInterface":
        raise NotImplementedError


@dataclass
class _Candidate:
    """A candidate human-object pair decoded from a toy scene."""

    b_h: Box
    b_o: Box
    person_class: Optional[int]
    object_class: Optional[int]


class ToyDetector(DetectorInterface):
    """A minimal differentiable pair scorer over procedural scenes.

    Candidates come from decoded scene rectangles (person x object
    pairs, each component paired with the whole canvas, and a whole-
    canvas fallback). Handcrafted region features feed linear heads:
    sigmoid scores per interaction class, a softmax over object classes
    plus a no-object slot, and bounded box refinements. Everything is
    analytic, so loss gradients check out against finite differences.
    """

    MAX_CANDIDATES = 8
    NEG_WEIGHT = 0.2
    SHIFT = 0.1  # center shift as a fraction of candidate size
    LOG_SIZE = 0.2  # log-size adjustment bound

    def __init__(self, n_interactions: int, n_objects: int, canvas: tuple = (48, 48),
                 init_seed: int = 0, _cache: Optional[dict] = None):
        if n_interactions < 1 or n_objects < 1:
            raise InvalidInputError("class-space sizes must be at least 1")
        self.n_interactions = int(n_interactions)
        self.n_objects = int(n_objects)
        self.canvas = (int(canvas[0]), int(canvas[1]))
        self.init_seed = int(init_seed)
        self.feat_dim = 3 + 3 + 4 + 4 + self.n_interactions + (self.n_objects + 1) + 1
        self._blocks = [
            ("w_a", self.n_interactions),
            ("w_o", self.n_objects + 1),
            ("w_bh", 4),
            ("w_bo", 4),
        ]
        self._theta = self._init_params()
        self._cache = _cache if _cache is not None else {}

    # -- parameters ---------------------------------------------------------

    def _init_params(self) -> np.ndarray:
        rng = np.random.default_rng(seed_from("toy-init", self.init_seed))
        parts = []
        for name, rows in self._blocks:
            w = np.zeros((rows, self.feat_dim))
            if name in ("w_a", "w_o"):
                w = 0.01 * rng.standard_normal((rows, self.feat_dim))
                w[:, -1] = -2.0  # bias column: start with low scores
            parts.append(w.ravel())
        return np.concatenate(parts)

    def _views(self, theta: np.ndarray) -> dict:
        views = {}
        offset = 0
        for name, rows in self._blocks:
            size = rows * self.feat_dim
            views[name] = theta[offset : offset + size].reshape(rows, self.feat_dim)
            offset += size
        return views

    def parameters(self) -> np.ndarray:
        return self._theta.copy()

    def load(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self._theta.shape:
            raise InvalidStateError(
                f"parameter vector has shape {theta.shape}, expected {self._theta.shape}"
            )
        self._theta = theta.copy()

    def trainable_mask(self) -> np.ndarray:
        mask = np.zeros_like(self._theta, dtype=bool)
        offset = 0
        for name, rows in self._blocks:
            size = rows * self.feat_dim
            if name in ("w_a", "w_o"):
                mask[offset : offset + size] = True
            offset += size
        return mask

    def spawn(self, theta: Optional[np.ndarray] = None) -> "ToyDetector":
        out = ToyDetector(self.n_interactions, self.n_objects, self.canvas,
                          self.init_seed, _cache=self._cache)
        if theta is not None:
            out.load(theta)
        return out

    # -- candidates and features --------------------------------------------

    def _candidates(self, image: Image):
        key = image.content_hash()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        comps = decode_scene(image)
        persons = [c for c in comps if c.kind == "person"]
        objects = [c for c in comps if c.kind == "object"]
        whole = Box(0.0, 0.0, float(image.width), float(image.height))
        cands = []
        for p in persons:
            for o in objects:
                cands.append(_Candidate(p.box, o.box, p.class_idx, o.class_idx))
        for i, p in enumerate(persons):
            for q in persons[i + 1 :]:
                cands.append(_Candidate(p.box, q.box, p.class_idx, 0))
        for p in persons:
            cands.append(_Candidate(p.box, whole, p.class_idx, None))
        for o in objects:
            cands.append(_Candidate(whole, o.box, None, o.class_idx))
        if not cands:
            cands = [_Candidate(whole, whole, None, None)]
        cands = cands[: self.MAX_CANDIDATES]
        feats = np.stack([self._feature(image, c) for c in cands])
        if len(self._cache) > 8192:
            self._cache.clear()
        self._cache[key] = (cands, feats)
        return cands, feats

    def _feature(self, image: Image, cand: _Candidate) -> np.ndarray:
        phi = np.zeros(self.feat_dim)
        phi[0:3] = _region_mean(image, cand.b_h)
        phi[3:6] = _region_mean(image, cand.b_o)
        w, h = float(image.width), float(image.height)
        phi[6:10] = _geom(cand.b_h, w, h)
        phi[10:14] = _geom(cand.b_o, w, h)
        if cand.person_class is not None and cand.person_class < self.n_interactions:
            phi[14 + cand.person_class] = 1.0
        base = 14 + self.n_interactions
        if cand.object_class is None:
            phi[base + self.n_objects] = 1.0
        elif cand.object_class < self.n_objects:
            phi[base + cand.object_class] = 1.0
        else:
            phi[base + self.n_objects] = 1.0
        phi[-1] = 1.0
        return phi

    # -- forward ------------------------------------------------------------

    def _forward(self, image: Image) -> dict:
        cands, feats = self._candidates(image)
        views = self._views(self._theta)
        z_a = feats @ views["w_a"].T  # (N, C_a)
        s_a = _sigmoid(z_a)
        z_o = feats @ views["w_o"].T  # (N, C_o + 1)
        s_o = _softmax_rows(z_o)
        t_h = feats @ views["w_bh"].T  # (N, 4)
        t_o = feats @ views["w_bo"].T
        boxes_h = [_refine(c.b_h, t_h[i], self.SHIFT, self.LOG_SIZE)
                   for i, c in enumerate(cands)]
        boxes_o = [_refine(c.b_o, t_o[i], self.SHIFT, self.LOG_SIZE)
                   for i, c in enumerate(cands)]
        return {
            "cands": cands, "feats": feats, "s_a": s_a, "s_o": s_o,
            "t_h": t_h, "t_o": t_o, "boxes_h": boxes_h, "boxes_o": boxes_o,
        }

    def predict(self, image: Image) -> amf.PredictionSet:
        fwd = self._forward(image)
        entries = [
            amf.PredictionEntry(
                b_h=fwd["boxes_h"][i], b_o=fwd["boxes_o"][i],
                s_a=fwd["s_a"][i].copy(), s_o=fwd["s_o"][i].copy(),
            )
            for i in range(len(fwd["cands"]))
        ]
        return amf.PredictionSet(entries, self.n_interactions, self.n_objects)

    # -- loss ---------------------------------------------------------------

    def _match(self, entries: list, labels: list) -> dict:
        """Assign labels to prediction entries by box overlap.

        Returns {entry_index: label}. At most len(entries) labels are
        matched; extras are ignored (the toy candidate pool is small).
        """
        if not labels:
            return {}
        labels = labels[: len(entries)]
        cost = np.empty((len(labels), len(entries)))
        for g, lab in enumerate(labels):
            for i, e in enumerate(entries):
                cost[g, i] = 1.0 - 0.5 * (iou(lab.b_h, e.b_h) + iou(lab.b_o, e.b_o))
        pairs = amf.hungarian(cost)
        return {i: labels[g] for g, i in pairs}

    def _label_scale(self) -> float:
        return float(max(self.canvas))

    def loss(self, preds: amf.PredictionSet, labels: list) -> float:
        """Non-negative scalar: interaction BCE + object CE + box l1."""
        match = self._match(preds.entries, labels)
        scale = self._label_scale()
        total = 0.0
        n = len(preds.entries)
        for i, e in enumerate(preds.entries):
            lab = match.get(i)
            if lab is not None:
                y = np.asarray(lab.interactions, dtype=np.float64)
                total += _bce_mean(e.s_a, y)
                total += -math.log(max(float(e.s_o[lab.c_o]), 1e-300))
                l1 = (
                    np.abs(e.b_h.as_array() - lab.b_h.as_array()).sum()
                    + np.abs(e.b_o.as_array() - lab.b_o.as_array()).sum()
                )
                total += float(l1) / (4.0 * scale)
            else:
                zero = np.zeros(self.n_interactions)
                neg = _bce_mean(e.s_a, zero)
                neg += -math.log(max(float(e.s_o[self.n_objects]), 1e-300))
                total += self.NEG_WEIGHT * neg
        return total / n

    def loss_and_grad(self, image: Image, labels: list):
        """Loss plus its analytic gradient over the flat parameters."""
        fwd = self._forward(image)
        entries = [
            amf.PredictionEntry(fwd["boxes_h"][i], fwd["boxes_o"][i],
                                fwd["s_a"][i], fwd["s_o"][i])
            for i in range(len(fwd["cands"]))
        ]
        match = self._match(entries, labels)
        scale = self._label_scale()
        n = len(entries)
        grad_views = {name: np.zeros((rows, self.feat_dim))
                      for name, rows in self._blocks}
        total = 0.0
        for i in range(n):
            phi = fwd["feats"][i]
            s_a, s_o = fwd["s_a"][i], fwd["s_o"][i]
            lab = match.get(i)
            if lab is not None:
                weight = 1.0 / n
                y = np.asarray(lab.interactions, dtype=np.float64)
                total += _bce_mean(s_a, y) / n
                dz_a = (s_a - y) / self.n_interactions * weight
                onehot = np.zeros(self.n_objects + 1)
                onehot[lab.c_o] = 1.0
                total += -math.log(max(float(s_o[lab.c_o]), 1e-300)) / n
                dz_o = (s_o - onehot) * weight
                # box terms
                for head, t_vec, box_pred, box_cand, box_lab in (
                    ("w_bh", fwd["t_h"][i], entries[i].b_h, fwd["cands"][i].b_h, lab.b_h),
                    ("w_bo", fwd["t_o"][i], entries[i].b_o, fwd["cands"][i].b_o, lab.b_o),
                ):
                    diff = box_pred.as_array() - box_lab.as_array()
                    total += float(np.abs(diff).sum()) / (4.0 * scale * n)
                    dcorner = np.sign(diff) / (4.0 * scale) * weight
                    dt = _refine_backward(box_cand, t_vec, dcorner,
                                          self.SHIFT, self.LOG_SIZE)
                    grad_views[head] += np.outer(dt, phi)
            else:
                weight = self.NEG_WEIGHT / n
                zero = np.zeros(self.n_interactions)
                total += self.NEG_WEIGHT * _bce_mean(s_a, zero) / n
                dz_a = s_a / self.n_interactions * weight
                onehot = np.zeros(self.n_objects + 1)
                onehot[self.n_objects] = 1.0
                total += self.NEG_WEIGHT * (
                    -math.log(max(float(s_o[self.n_objects]), 1e-300))
                ) / n
                dz_o = (s_o - onehot) * weight
            grad_views["w_a"] += np.outer(dz_a, phi)
            grad_views["w_o"] += np.outer(dz_o, phi)
        grad = np.concatenate(
            [grad_views[name].ravel() for name, _ in self._blocks]
        )
        return total, grad


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _bce_mean(s: np.ndarray, y: np.ndarray) -> float:
    s = np.clip(s, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(s) + (1.0 - y) * np.log(1.0 - s)))


def _region_mean(image: Image, box: Box) -> np.ndarray:
    x1 = max(0, int(box.x1))
    y1 = max(0, int(box.y1))
    x2 = min(image.width, max(x1 + 1, int(math.ceil(box.x2))))
    y2 = min(image.height, max(y1 + 1, int(math.ceil(box.y2))))
    if x1 >= image.width or y1 >= image.height:
        return np.zeros(3)
    region = image.pixels[:, y1:y2, x1:x2]
    return region.reshape(3, -1).mean(axis=1) / 255.0


def _geom(box: Box, w: float, h: float) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx / w, cy / h, box.width / w, box.height / h])


def _refine(box: Box, t: np.ndarray, shift: float, log_size: float) -> Box:
    cx, cy = box.center
    w, h = box.width, box.height
    cx2 = cx + shift * w * math.tanh(t[0])
    cy2 = cy + shift * h * math.tanh(t[1])
    w2 = w * math.exp(log_size * math.tanh(t[2]))
    h2 = h * math.exp(log_size * math.tanh(t[3]))
    return Box(cx2 - w2 / 2.0, cy2 - h2 / 2.0, cx2 + w2 / 2.0, cy2 + h2 / 2.0)


def _refine_backward(box: Box, t: np.ndarray, dcorner: np.ndarray,
                     shift: float, log_size: float) -> np.ndarray:
    """Backpropagate corner gradients through _refine to the head outputs."""
    w, h = box.width, box.height
    w2 = w * math.exp(log_size * math.tanh(t[2]))
    h2 = h * math.exp(log_size * math.tanh(t[3]))
    # corners = (cx2 - w2/2, cy2 - h2/2, cx2 + w2/2, cy2 + h2/2)
    dcx2 = dcorner[0] + dcorner[2]
    dcy2 = dcorner[1] + dcorner[3]
    dw2 = 0.5 * (dcorner[2] - dcorner[0])
    dh2 = 0.5 * (dcorner[3] - dcorner[1])
    dt = np.zeros(4)
    dt[0] = dcx2 * shift * w * (1.0 - math.tanh(t[0]) ** 2)
    dt[1] = dcy2 * shift * h * (1.0 - math.tanh(t[1]) ** 2)
    dt[2] = dw2 * w2 * log_size * (1.0 - math.tanh(t[2]) ** 2)
    dt[3] = dh2 * h2 * log_size * (1.0 - math.tanh(t[3]) ** 2)
    return dt


# ---------------------------------------------------------------------------
# batches and the total loss
# ---------------------------------------------------------------------------


@dataclass
class VirtualItem:
    """A strong view of a synthetic image with transported pseudo-labels."""

    image_id: str
    image: Image
    labels: Optional[list]  # list of amf.Triplet


@dataclass
class RealItem:
    """Strong and weak views of a real image with transported ground truth."""

    image_id: str
    image_strong: Image
    labels_strong: list
    image_weak: Image
    labels_weak: list


def total_loss(student: DetectorInterface, batch_v: list, batch_r: list) -> float:
    """Sum of the three loss streams; no reweighting.

    Raises:
        InvalidStateError: if a virtual item arrives without pseudo-labels.
    """
    total = 0.0
    for item in batch_v:
        if item.labels is None:
            raise InvalidStateError(
                f"virtual sample {item.image_id!r} has no pseudo-labels"
            )
        total += student.loss(student.predict(item.image), item.labels)
    for item in batch_r:
        total += student.loss(student.predict(item.image_strong), item.labels_strong)
        total += student.loss(student.predict(item.image_weak), item.labels_weak)
    return total


def total_grad(student: DetectorInterface, batch_v: list, batch_r: list,
               virtual_mask: Optional[np.ndarray] = None):
    """total_loss plus its parameter gradient.

    When virtual_mask is given, gradients from the virtual stream are
    zeroed outside the mask (freeze semantics: masking, not exclusion).
    """
    theta = student.parameters()
    grad_v = np.zeros_like(theta)
    grad_r = np.zeros_like(theta)
    total = 0.0
    for item in batch_v:
        if item.labels is None:
            raise InvalidStateError(
                f"virtual sample {item.image_id!r} has no pseudo-labels"
            )
        l, g = student.loss_and_grad(item.image, item.labels)
        total += l
        grad_v += g
    for item in batch_r:
        l, g = student.loss_and_grad(item.image_strong, item.labels_strong)
        total += l
        grad_r += g
        l, g = student.loss_and_grad(item.image_weak, item.labels_weak)
        total += l
        grad_r += g
    if virtual_mask is not None:
        grad_v = grad_v * virtual_mask
    return total, grad_v + grad_r


# ---------------------------------------------------------------------------
# training configuration and samples
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Knobs of the training loop; defaults follow the reference recipe."""

    epochs: int = 10
    alpha: float = 0.9996
    lr: float = 0.5
    batch_size: int = 8
    kappa: float = 1.5
    tau_nms: float = 0.7
    freeze_heads: bool = True
    seed: int = 0
    flip_prob: float = 0.5
    scale_range: tuple = (0.8, 1.2)
    use_predicted_object: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.lr < 0.0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.kappa <= 0.0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if not (0.0 <= self.tau_nms <= 1.0):
            raise ConfigError(f"tau_nms must lie in [0, 1], got {self.tau_nms}")


@dataclass
class TrainSample:
    """One dataset image in memory: ground truth for real images, the
    single seed annotation for synthetic ones."""

    image_id: str
    image: Image
    labels: list = field(default_factory=list)  # list of amf.Triplet (real)
    annotation: Optional[amf.Annotation] = None  # synthetic only


def triplet_from_annotation(ann, n_interactions: int) -> amf.Triplet:
    """One-hot ground-truth triplet from a single-class annotation."""
    bits = np.zeros(n_interactions, dtype=np.int64)
    if not (0 <= ann.c_a < n_interactions):
        raise InvalidInputError(
            f"interaction {ann.c_a} outside class space of size {n_interactions}"
        )
    bits[ann.c_a] = 1
    return amf.Triplet(interactions=bits, c_o=ann.c_o, b_h=ann.b_h, b_o=ann.b_o)


def real_samples_from_manifest(manifest, provider, n_interactions: int) -> list:
    """Load real training samples with their ground-truth triplets."""
    out = []
    for entry in manifest.images:
        anns = manifest.annotations_for(entry.id)
        labels = [triplet_from_annotation(a, n_interactions) for a in anns]
        out.append(TrainSample(image_id=entry.id, image=provider.load(entry),
                               labels=labels))
    return out


def virtual_samples_from_manifest(manifest, provider) -> list:
    """Load synthetic samples; each must carry exactly one annotation."""
    out = []
    for entry in manifest.images:
        anns = manifest.annotations_for(entry.id)
        if len(anns) != 1:
            raise InvalidInputError(
                f"virtual image {entry.id!r} has {len(anns)} annotations, expected 1"
            )
        a = anns[0]
        out.append(
            TrainSample(
                image_id=entry.id, image=provider.load(entry),
                annotation=amf.Annotation(c_a=a.c_a, c_o=a.c_o, b_h=a.b_h, b_o=a.b_o),
            )
        )
    return out


# ---------------------------------------------------------------------------
# the two-phase epoch
# ---------------------------------------------------------------------------


@dataclass
class _VirtualView:
    """Per-epoch augmented state of one synthetic image."""

    image_id: str
    image_strong: Image
    weak_size: tuple
    weak_record: TransformRecord
    strong_record: TransformRecord
    annotation: amf.Annotation  # transported into the weak view
    teacher_preds: amf.PredictionSet


class EpochContext:
    """Holds the two-phase state of one epoch over the virtual set.

    collect() must run before threshold(); threshold() before any
    pseudo_labels_for() call. Violations raise PhaseOrderError.
    """

    def __init__(self, teacher_detector: DetectorInterface, config: TrainConfig,
                 epoch: int):
        self.teacher = teacher_detector
        self.config = config
        self.epoch = epoch
        self.views = []
        self.score_pool = []
        self.tau_bin: Optional[float] = None
        self._collected = False

    def collect(self, virtual_samples: list):
        """Phase one: pad, weakly augment, teacher-score every sample."""
        cfg = self.config
        for sample in virtual_samples:
            if sample.annotation is None:
                raise InvalidInputError(
                    f"sample {sample.image_id!r} lacks a seed annotation"
                )
            p = np.random.default_rng(
                seed_from("padp", cfg.seed, self.epoch, sample.image_id)
            ).random()
            padded, ann_p, _ = random_pad(
                sample.image, sample.annotation, p,
                seed_from("padm", cfg.seed, self.epoch, sample.image_id),
            )
            img_w, boxes_w, rec_w = apply_weak(
                padded, [ann_p.b_h, ann_p.b_o],
                seed_from("weak", cfg.seed, self.epoch, sample.image_id),
                flip_prob=cfg.flip_prob, scale_range=cfg.scale_range,
            )
            img_s, _, rec_s = apply_strong(
                padded, [],
                seed_from("strong", cfg.seed, self.epoch, sample.image_id),
                flip_prob=cfg.flip_prob, scale_range=cfg.scale_range,
            )
            ann_w = amf.Annotation(c_a=ann_p.c_a, c_o=ann_p.c_o,
                                   b_h=boxes_w[0], b_o=boxes_w[1])
            preds = self.teacher.predict(img_w)
            for e in preds.entries:
                finite = e.s_a[np.isfinite(e.s_a)]
                if finite.size:
                    self.score_pool.append(float(finite.max()))
            self.views.append(
                _VirtualView(
                    image_id=sample.image_id, image_strong=img_s,
                    weak_size=(img_w.width, img_w.height),
                    weak_record=rec_w, strong_record=rec_s,
                    annotation=ann_w, teacher_preds=preds,
                )
            )
        self._collected = True

    def threshold(self) -> float:
        """Global reduction between the phases."""
        if not self._collected:
            raise PhaseOrderError("threshold requested before score collection")
        self.tau_bin = amf.select_threshold(
            self.score_pool, self.config.kappa, max(1, len(self.views))
        )
        return self.tau_bin

    def pseudo_labels_for(self, view: _VirtualView) -> VirtualItem:
        """Phase two for one image: correct, binarize, transport."""
        if self.tau_bin is None:
            raise PhaseOrderError(
                "pseudo-label construction requires the epoch threshold; "
                "run collect() and threshold() first"
            )
        cfg = self.config
        corr = amf.correct_annotation(view.teacher_preds, view.annotation,
                                      view.weak_size)
        pls = amf.build_pseudo_labels(
            corr.predictions, corr.annotation, self.tau_bin, cfg.tau_nms,
            use_predicted_object=cfg.use_predicted_object,
        )
        pls = transfer_labels(pls, view.weak_record, view.strong_record)
        return VirtualItem(image_id=view.image_id, image=view.image_strong,
                           labels=pls.triplets)


@dataclass
class EpochReport:
    """What one epoch did, for logs and audit files."""

    epoch: int
    tau_bin: Optional[float]
    steps: int
    mean_loss: float
    n_pseudo_triplets: int


def _real_items_for_epoch(real_samples: list, config: TrainConfig,
                          epoch: int) -> list:
    items = []
    for sample in real_samples:
        boxes = []
        for t in sample.labels:
            boxes.extend([t.b_h, t.b_o])
        img_s, boxes_s, _ = apply_strong(
            sample.image, boxes,
            seed_from("rs", config.seed, epoch, sample.image_id),
            flip_prob=config.flip_prob, scale_range=config.scale_range,
        )
        img_w, boxes_w, _ = apply_weak(
            sample.image, boxes,
            seed_from("rw", config.seed, epoch, sample.image_id),
            flip_prob=config.flip_prob, scale_range=config.scale_range,
        )
        labels_s, labels_w = [], []
        for j, t in enumerate(sample.labels):
            labels_s.append(amf.Triplet(t.interactions.copy(), t.c_o,
                                        boxes_s[2 * j], boxes_s[2 * j + 1]))
            labels_w.append(amf.Triplet(t.interactions.copy(), t.c_o,
                                        boxes_w[2 * j], boxes_w[2 * j + 1]))
        items.append(RealItem(image_id=sample.image_id,
                              image_strong=img_s, labels_strong=labels_s,
                              image_weak=img_w, labels_weak=labels_w))
    return items


def _chunks(seq: list, size: int) -> list:
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def train_epoch(student: DetectorInterface, teacher: EMAState,
                virtual_samples: list, real_samples: list,
                config: TrainConfig, epoch: int,
                on_step: Optional[Callable] = None):
    """One epoch of teacher-student training.

    Phase one teacher-scores the virtual set and fixes the epoch's
    threshold; phase two builds pseudo-labels per batch, steps the
    student on the summed loss (virtual-stream gradients masked to
    classification heads when the freeze flag is on), and EMA-updates
    the teacher after every step. With an empty virtual set the loop is
    exactly supervised training on the real set.

    Returns:
        (student, teacher, EpochReport)
    """
    mask = student.trainable_mask() if config.freeze_heads else None
    vitems_sources = []
    tau_bin = None
    n_pseudo = 0
    if virtual_samples:
        ctx = EpochContext(student.spawn(teacher.theta), config, epoch)
        ctx.collect(virtual_samples)
        tau_bin = ctx.threshold()
        for view in ctx.views:
            item = ctx.pseudo_labels_for(view)
            n_pseudo += len(item.labels)
            vitems_sources.append(item)

    real_items = _real_items_for_epoch(real_samples, config, epoch)

    rng_v = np.random.default_rng(seed_from("order-v", config.seed, epoch))
    order_v = rng_v.permutation(len(vitems_sources)) if vitems_sources else []
    vitems = [vitems_sources[i] for i in order_v]
    rng_r = np.random.default_rng(seed_from("order-r", config.seed, epoch))
    order_r = rng_r.permutation(len(real_items)) if real_items else []
    ritems = [real_items[i] for i in order_r]

    v_batches = _chunks(vitems, config.batch_size)
    r_batches = _chunks(ritems, config.batch_size)
    steps = max(len(v_batches), len(r_batches))
    losses = []
    for i in range(steps):
        bv = v_batches[i] if i < len(v_batches) else []
        br = r_batches[i] if i < len(r_batches) else []
        loss, grad = total_grad(student, bv, br, virtual_mask=mask)
        student.load(student.parameters() - config.lr * grad)
        teacher = ema_update(teacher, student.parameters())
        losses.append(loss)
        if on_step is not None:
            on_step({"epoch": epoch, "step": i, "loss": loss, "grad": grad,
                     "n_virtual": len(bv), "n_real": len(br)})
    report = EpochReport(
        epoch=epoch, tau_bin=tau_bin, steps=steps,
        mean_loss=float(np.mean(losses)) if losses else 0.0,
        n_pseudo_triplets=n_pseudo,
    )
    return student, teacher, report


def train(student: DetectorInterface, virtual_samples: list, real_samples: list,
          config: TrainConfig, teacher: Optional[EMAState] = None,
          on_epoch: Optional[Callable] = None):
    """Run config.epochs epochs; the teacher starts from the student's
    parameters unless an explicit state is given.

    Returns:
        (student, teacher, [EpochReport, ...])
    """
    if teacher is None:
        teacher = EMAState(theta=student.parameters(), alpha=config.alpha)
    reports = []
    for epoch in range(config.epochs):
        student, teacher, report = train_epoch(
            student, teacher, virtual_samples, real_samples, config, epoch
        )
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
    return student, teacher, reports


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate_recall(detector: DetectorInterface, samples: list,
                    iou_thresh: float = 0.5, score_thresh: float = 0.5,
                    categories: Optional[set] = None):
    """Fraction of ground-truth triplets recovered by the detector.

    A triplet counts as hit when some prediction overlaps both its boxes
    at iou_thresh or better, scores its interaction class strictly above
    score_thresh, and classifies the object correctly. With categories
    given, only triplets in those (interaction, object) pairs count.

    Returns:
        (recall, hits, total); recall is 0.0 over an empty ground truth.
    """
    hits = 0
    total = 0
    for sample in samples:
        preds = None
        for t in sample.labels:
            c_a = int(np.argmax(t.interactions))
            if categories is not None and (c_a, t.c_o) not in categories:
                continue
            total += 1
            if preds is None:
                preds = detector.predict(sample.image)
            for e in preds.entries:
                if iou(e.b_h, t.b_h) < iou_thresh or iou(e.b_o, t.b_o) < iou_thresh:
                    continue
                if float(e.s_a[c_a]) <= score_thresh:
                    continue
                if int(np.argmax(e.s_o)) != t.c_o:
                    continue
                hits += 1
                break
    recall = hits / total if total else 0.0
    return recall, hits, total


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"VILCKPT\x01"


def save_checkpoint(path, theta: np.ndarray, meta: dict):
    """Length-prefixed binary: magic, JSON metadata, float64 LE vector."""
    theta = np.asarray(theta, dtype="<f8")
    if theta.ndim != 1:
        raise InvalidInputError("checkpoint parameters must be a flat vector")
    meta = dict(meta)
    meta["dim"] = int(theta.shape[0])
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<Q", theta.shape[0]))
        f.write(theta.tobytes())


def load_checkpoint(path):
    """Returns (theta, meta); malformed files raise ParseError."""
    if not os.path.exists(path):
        raise ParseError(f"{path}: checkpoint does not exist")
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(_CKPT_MAGIC) + 4 or blob[: len(_CKPT_MAGIC)] != _CKPT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file (bad magic)")
    off = len(_CKPT_MAGIC)
    (meta_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    if off + meta_len + 8 > len(blob):
        raise ParseError(f"{path}: truncated checkpoint metadata")
    try:
        meta = json.loads(blob[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: unreadable checkpoint metadata: {exc}") from exc
    off += meta_len
    (count,) = struct.unpack_from("<Q", blob, off)
    off += 8
    expected = count * 8
    if len(blob) - off != expected:
        raise ParseError(
            f"{path}: parameter payload has {len(blob) - off} bytes, expected {expected}"
        )
    theta = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64)
    if meta.get("dim") not in (None, count):
        raise ParseError(f"{path}: metadata dim {meta.get('dim')} != vector length {count}")
    return theta, meta
