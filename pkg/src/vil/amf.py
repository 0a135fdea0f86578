"""Matching-based label correction and pseudo-label construction.

Given a detector's prediction set for a synthesized image and the single
seed annotation the image was built from, this module scores every
prediction against the annotation, picks the best match with an optimal
assignment, rewrites the annotation's boxes from that match, then turns
high-confidence predictions into binarized pseudo-labels with an
order-statistic threshold and pairwise duplicate suppression.

Class indices are 0-based everywhere. Interaction scores s_a live in
[0, 1]; after correction the matched prediction's own-class score is
overridden with an in-memory +inf sentinel so it always ranks first; the
sentinel is never serialized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, InvalidInputError
from .geometry import Box, giou, iou

logger = logging.getLogger(__name__)

OVERRIDE_SCORE = math.inf


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass
class PredictionEntry:
    """One predicted human-object pair with class scores.

    s_a holds one independent score per interaction class. s_o holds one
    score per object class plus a trailing no-object slot.
    """

    b_h: Box
    b_o: Box
    s_a: np.ndarray
    s_o: np.ndarray


@dataclass
class PredictionSet:
    """All predictions for one image, with the class-space sizes."""

    entries: list
    n_interactions: int
    n_objects: int

    def __post_init__(self):
        if self.n_interactions < 1 or self.n_objects < 1:
            raise InvalidInputError("class-space sizes must be at least 1")
        if not self.entries:
            raise InvalidInputError("a prediction set needs at least one entry")
        for i, e in enumerate(self.entries):
            e.s_a = np.asarray(e.s_a, dtype=np.float64)
            e.s_o = np.asarray(e.s_o, dtype=np.float64)
            if e.s_a.shape != (self.n_interactions,):
                raise InvalidInputError(
                    f"entry {i}: s_a has shape {e.s_a.shape}, expected ({self.n_interactions},)"
                )
            if e.s_o.shape != (self.n_objects + 1,):
                raise InvalidInputError(
                    f"entry {i}: s_o has shape {e.s_o.shape}, expected ({self.n_objects + 1},)"
                )
            finite_a = e.s_a[np.isfinite(e.s_a)]
            if np.any(finite_a < 0.0) or np.any(finite_a > 1.0):
                raise InvalidInputError(f"entry {i}: s_a values outside [0, 1]")
            if np.any(e.s_a == -np.inf) or np.any(np.isnan(e.s_a)):
                raise InvalidInputError(f"entry {i}: s_a has nan or -inf")
            if not np.all(np.isfinite(e.s_o)):
                raise InvalidInputError(f"entry {i}: s_o must be finite")
            if np.any(e.s_o < 0.0) or np.any(e.s_o > 1.0):
                raise InvalidInputError(f"entry {i}: s_o values outside [0, 1]")

    def __len__(self) -> int:
        return len(self.entries)

    def copy(self) -> "PredictionSet":
        return PredictionSet(
            [
                PredictionEntry(e.b_h, e.b_o, e.s_a.copy(), e.s_o.copy())
                for e in self.entries
            ],
            self.n_interactions,
            self.n_objects,
        )


@dataclass
class Annotation:
    """A single interaction label: classes plus human and object boxes."""

    c_a: int
    c_o: int
    b_h: Box
    b_o: Box


@dataclass
class Triplet:
    """One pseudo-label: binarized interaction vector, object class, boxes."""

    interactions: np.ndarray
    c_o: int
    b_h: Box
    b_o: Box
    corrected: bool = False


@dataclass
class PseudoLabelSet:
    """Pseudo-labels for one image plus the threshold that produced them."""

    triplets: list
    tau_bin: float


@dataclass
class CorrectionResult:
    """Output of matching an annotation against a prediction set."""

    annotation: Annotation
    omega: int
    predictions: PredictionSet
    costs: np.ndarray
    dropped_localization: bool


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


def classification_cost(s_a: np.ndarray, c_a: int) -> float:
    """Cost for how well an interaction score vector supports class c_a.

    Averages the own-class score with the mean complement score over all
    other classes, negated so better support means lower cost. The value
    lies in [-1, 0] for scores in [0, 1]. With a single-class space the
    complement mean is empty and taken as 1; that case is logged as
    degenerate.
    """
    s_a = np.asarray(s_a, dtype=np.float64)
    n = s_a.shape[0]
    if not (0 <= c_a < n):
        raise InvalidInputError(f"class {c_a} outside score vector of size {n}")
    if n == 1:
        logger.debug("classification_cost on a single-class space is degenerate")
        complement = 1.0
    else:
        others = np.delete(s_a, c_a)
        complement = float(np.mean(1.0 - others))
    return -0.5 * (float(s_a[c_a]) + complement)


def regression_cost(pred: PredictionEntry, ann: Annotation,
                    image_size: tuple) -> float:
    """Worse of the two l1 box distances, in image-normalized coordinates."""
    w, h = float(image_size[0]), float(image_size[1])
    if w <= 0 or h <= 0:
        raise InvalidInputError(f"image size must be positive, got {image_size}")
    scale = np.array([w, h, w, h], dtype=np.float64)
    d_h = float(np.abs(pred.b_h.as_array() / scale - ann.b_h.as_array() / scale).sum())
    d_o = float(np.abs(pred.b_o.as_array() / scale - ann.b_o.as_array() / scale).sum())
    return max(d_h, d_o)


def iou_cost(pred: PredictionEntry, ann: Annotation) -> float:
    """Worse of the two generalized-IoU gaps, each 1 - giou."""
    return max(1.0 - giou(pred.b_h, ann.b_h), 1.0 - giou(pred.b_o, ann.b_o))


def localization_cost(pred: PredictionEntry, ann: Annotation,
                      image_size: tuple) -> float:
    """Regression cost plus IoU cost; non-negative, 0 iff boxes coincide."""
    return regression_cost(pred, ann, image_size) + iou_cost(pred, ann)


def overall_costs(preds: PredictionSet, ann: Annotation,
                  image_size: tuple):
    """Per-prediction matching costs with the adaptive localization drop.

    When every prediction's combined (classification + localization)
    cost is positive, localization is considered uninformative for this
    image and the classification term alone ranks the predictions.

    Returns:
        (costs, dropped) where costs is an (N,) float array and dropped
        says whether the localization term was discarded.
    """
    cls = np.array(
        [classification_cost(e.s_a, ann.c_a) for e in preds.entries], dtype=np.float64
    )
    loc = np.array(
        [localization_cost(e, ann, image_size) for e in preds.entries], dtype=np.float64
    )
    combined = cls + loc
    if float(np.min(combined)) > 0.0:
        return cls.copy(), True
    return combined, False


# ---------------------------------------------------------------------------
# assignment
# ---------------------------------------------------------------------------


def _lsa_total(costs: np.ndarray) -> float:
    if costs.shape[0] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(costs)
    return float(costs[rows, cols].sum())


def hungarian(costs) -> list:
    """Minimum-cost one-to-one assignment of rows to columns.

    Requires a finite 2-D matrix with no more rows than columns; every
    row is assigned a distinct column. Among all optimal assignments the
    lexicographically smallest (row 0 takes its smallest feasible
    column, then row 1, ...) is returned, so ties break deterministically.

    Returns:
        list of (row, col) pairs, one per row, in row order.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise InvalidInputError(f"cost matrix must be 2-D, got shape {costs.shape}")
    g, n = costs.shape
    if g == 0:
        return []
    if g > n:
        raise InvalidInputError(f"cost matrix has more rows ({g}) than columns ({n})")
    if not np.all(np.isfinite(costs)):
        raise InvalidInputError("cost matrix must be finite")

    remaining = list(range(n))
    best = _lsa_total(costs)
    pairs = []
    for row in range(g):
        tail = costs[row + 1 :, :]
        tol = 1e-9 * (1.0 + abs(best))
        for pos, col in enumerate(remaining):
            rest_cols = remaining[:pos] + remaining[pos + 1 :]
            sub = tail[:, rest_cols]
            sub_total = _lsa_total(sub)
            if costs[row, col] + sub_total <= best + tol:
                pairs.append((row, int(col)))
                remaining = rest_cols
                best = sub_total
                break
        else:  # pragma: no cover - optimum always has a feasible column
            raise InvalidInputError("assignment failed to recover an optimal column")
    return pairs


def correct_annotation(preds: PredictionSet, ann: Annotation,
                       image_size: tuple) -> CorrectionResult:
    """Rewrite an annotation's boxes from its best-matching prediction.

    The best match minimizes the overall cost (assignment over a 1 x N
    matrix, which reduces to an argmin with deterministic lexicographic
    tie-breaking). The matched prediction's own-class interaction score
    is overridden with +inf in a copied prediction set so downstream
    thresholding always keeps it; class fields are left untouched.
    """
    costs, dropped = overall_costs(preds, ann, image_size)
    pairs = hungarian(costs.reshape(1, -1))
    omega = pairs[0][1]
    matched = preds.entries[omega]
    corrected = Annotation(c_a=ann.c_a, c_o=ann.c_o, b_h=matched.b_h, b_o=matched.b_o)
    out = preds.copy()
    out.entries[omega].s_a[ann.c_a] = OVERRIDE_SCORE
    return CorrectionResult(
        annotation=corrected,
        omega=omega,
        predictions=out,
        costs=costs,
        dropped_localization=dropped,
    )


# ---------------------------------------------------------------------------
# thresholding and pseudo-labels
# ---------------------------------------------------------------------------


def select_threshold(scores, kappa: float, n_virtual: int) -> float:
    """Order-statistic confidence threshold over a score pool.

    Picks the m-th highest score where m = ceil(kappa * n_virtual).
    The pool is the per-prediction best interaction score over every
    virtual image; infinite override sentinels are excluded (they would
    otherwise shift the order statistic by one).

    Raises:
        ConfigError: if kappa * n_virtual < 1 or the pool has fewer
            than m finite scores.
    """
    scores = np.asarray(list(scores), dtype=np.float64)
    scores = scores[np.isfinite(scores)]
    if n_virtual < 1:
        raise ConfigError(f"virtual-image count must be >= 1, got {n_virtual}")
    if kappa <= 0.0:
        raise ConfigError(f"kappa must be positive, got {kappa}")
    target = kappa * n_virtual
    if target < 1.0:
        raise ConfigError(
            f"kappa * n_virtual = {target} selects no score; need at least 1"
        )
    m = int(math.ceil(target))
    if scores.shape[0] < m:
        raise ConfigError(
            f"score pool has {scores.shape[0]} finite entries but rank {m} is "
            f"requested (kappa={kappa}, n_virtual={n_virtual}); shortfall of "
            f"{m - scores.shape[0]}"
        )
    ordered = np.sort(scores)[::-1]
    return float(ordered[m - 1])


def binarize(s_a: np.ndarray, tau_bin: float) -> np.ndarray:
    """Per-class hard labels: 1 where the score strictly exceeds the
    threshold, else 0. The +inf override always maps to 1."""
    s_a = np.asarray(s_a, dtype=np.float64)
    return (s_a > tau_bin).astype(np.int64)


@dataclass
class ScoredPair:
    """NMS candidate: a scored human-object pair with its object class."""

    score: float
    c_o: int
    b_h: Box
    b_o: Box
    index: int = 0
    payload: Optional[object] = None


def pairwise_nms(candidates: list, tau_nms: float) -> list:
    """Greedy duplicate suppression over human-object pairs.

    Candidates are visited in descending score order (ties by original
    index). A later pair is suppressed by a kept pair iff both share the
    same object class and min(IoU of the human boxes, IoU of the object
    boxes) strictly exceeds tau_nms.

    Returns:
        The kept candidates, in visiting order.
    """
    if not (0.0 <= tau_nms <= 1.0):
        raise InvalidInputError(f"tau_nms must lie in [0, 1], got {tau_nms}")
    order = sorted(range(len(candidates)),
                   key=lambda i: (-candidates[i].score, candidates[i].index))
    kept = []
    for i in order:
        cand = candidates[i]
        dup = False
        for k in kept:
            if k.c_o != cand.c_o:
                continue
            overlap = min(iou(k.b_h, cand.b_h), iou(k.b_o, cand.b_o))
            if overlap > tau_nms:
                dup = True
                break
        if not dup:
            kept.append(cand)
    return kept


def build_pseudo_labels(preds: PredictionSet, ann: Annotation, tau_bin: float,
                        tau_nms: float, use_predicted_object: bool = False) -> PseudoLabelSet:
    """Turn corrected predictions into binarized pseudo-labels.

    Keeps entries whose best interaction score strictly exceeds tau_bin
    (the corrected entry carries the +inf override, so it always
    qualifies and, ranking first, is never suppressed), removes
    near-duplicate pairs, then binarizes each survivor's score vector.

    Args:
        use_predicted_object: when True each triplet takes the entry's
            own most likely object class instead of the annotation's.
    """
    candidates = []
    for i, e in enumerate(preds.entries):
        top = float(np.max(e.s_a))
        if top > tau_bin:
            if use_predicted_object:
                c_o = int(np.argmax(e.s_o[:-1]))
            else:
                c_o = ann.c_o
            candidates.append(
                ScoredPair(score=top, c_o=c_o, b_h=e.b_h, b_o=e.b_o, index=i, payload=e)
            )
    kept = pairwise_nms(candidates, tau_nms)
    triplets = []
    for cand in kept:
        entry = cand.payload
        triplets.append(
            Triplet(
                interactions=binarize(entry.s_a, tau_bin),
                c_o=cand.c_o,
                b_h=cand.b_h,
                b_o=cand.b_o,
                corrected=bool(np.any(np.isposinf(entry.s_a))),
            )
        )
    return PseudoLabelSet(triplets=triplets, tau_bin=float(tau_bin))
