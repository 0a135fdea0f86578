"""Curation of synthesized training images.

Candidates are produced from templated prompts and must survive three
filters, applied in order with short-circuiting:

  1. scene similarity - the candidate's scene embedding must be close
     enough (max cosine) to at least one real training image;
  2. instance existence - a detector must find both a person and the
     prompted object class with high confidence;
  3. interactiveness - a vision-language model must give a high enough
     score to the best (person, object) pair once everything outside
     the pair is masked away.

A surviving candidate becomes a virtual sample carrying the best pair's
boxes as its single seed annotation plus the full verdict trail. Every
rejection is logged with its failing stage and score.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from .amf import Annotation
from .backends import Backend
from .errors import ConfigError, InvalidInputError
from .geometry import Image, union_mask
from .scenes import seed_from

PERSON_LABEL = 0

HICO_BUDGET_RARE = 40
HICO_BUDGET_NON_RARE = 10
VCOCO_BUDGET_LOW = 30
VCOCO_BUDGET_HIGH = 15
VCOCO_LOW_COUNT = 10

MAX_ATTEMPTS_PER_BUDGET = 10


# ---------------------------------------------------------------------------
# words and prompts
# ---------------------------------------------------------------------------


@dataclass
class WordSets:
    """Word pools for prompt construction.

    scene_map assigns each (interaction, object) category the subset of
    scene words it may be placed in; every subset must be non-empty and
    drawn from scene_words.
    """

    human_words: list
    scene_words: list
    scene_map: dict

    def __post_init__(self):
        if not self.human_words:
            raise ConfigError("human word pool is empty")
        if not self.scene_words:
            raise ConfigError("scene word pool is empty")
        known = set(self.scene_words)
        for cat, words in self.scene_map.items():
            if not words:
                raise ConfigError(f"scene map for category {cat} is empty")
            for w in words:
                if w not in known:
                    raise ConfigError(
                        f"scene map for category {cat} uses unknown word {w!r}"
                    )


@dataclass(frozen=True)
class PromptSpec:
    """A fully rendered prompt plus the draws that produced it."""

    c_a: int
    c_o: int
    w_h: str
    w_s: str
    text: str


def _surface(name: str) -> str:
    return name.replace("_", " ")


def _article(word: str) -> str:
    return "an" if word[:1].lower() in "aeiou" else "a"


def render_prompt(c_a: int, c_o: int, w_h: str, w_s: str, vocab, lexicon: dict) -> str:
    """Render the fixed sentence template for the given draws."""
    interaction = vocab.interactions[c_a]
    if interaction not in lexicon:
        raise ConfigError(f"lexicon has no gerund for interaction {interaction!r}")
    gerund = lexicon[interaction]
    obj = _surface(vocab.objects[c_o])
    human = _surface(w_h)
    scene = _surface(w_s)
    return (
        f"a photo of {_article(human)} {human} {gerund} "
        f"{_article(obj)} {obj} in the {scene}"
    )


def build_prompt(cat: tuple, words: WordSets, vocab, lexicon: dict,
                 rng_seed: int) -> PromptSpec:
    """Draw a human word and a scene word uniformly, then render the
    sentence. The same seed always yields the same prompt."""
    c_a, c_o = int(cat[0]), int(cat[1])
    if not (0 <= c_a < vocab.n_interactions) or not (0 <= c_o < vocab.n_objects):
        raise ConfigError(f"category {cat} outside the vocabulary")
    if (c_a, c_o) not in words.scene_map:
        raise ConfigError(f"scene map has no entry for category {(c_a, c_o)}")
    rng = random.Random(rng_seed)
    w_h = rng.choice(list(words.human_words))
    w_s = rng.choice(list(words.scene_map[(c_a, c_o)]))
    text = render_prompt(c_a, c_o, w_h, w_s, vocab, lexicon)
    return PromptSpec(c_a=c_a, c_o=c_o, w_h=w_h, w_s=w_s, text=text)


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------


@dataclass
class FilterVerdict:
    """Outcome of one filter stage on one candidate."""

    stage: str  # "scene" | "instance" | "interactiveness"
    passed: bool
    score: Optional[float] = None
    n_human: Optional[int] = None
    n_object: Optional[int] = None
    pair: Optional[tuple] = None  # (Box, Box) chosen by the last stage


@dataclass
class VirtualSample:
    """A curated synthetic image with its seed annotation and verdicts."""

    image_id: str
    image: Image
    prompt: PromptSpec
    annotation: Annotation
    verdicts: list = field(default_factory=list)


@dataclass
class MusicConfig:
    """Thresholds for the three filter stages."""

    tau_scn: float = 0.9
    tau_det: float = 0.9
    tau_inter: float = 0.3

    def __post_init__(self):
        for name in ("tau_scn", "tau_det", "tau_inter"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise InvalidInputError(f"feature shapes differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise InvalidInputError("cannot take cosine of a zero-norm feature")
    return float(np.dot(u, v) / (nu * nv))


def scene_similarity(feature: np.ndarray, real_features) -> float:
    """Highest cosine similarity between a candidate's embedding and any
    real image's embedding. Requires a non-empty, non-degenerate pool."""
    real_features = list(real_features)
    if not real_features:
        raise InvalidInputError("real feature pool is empty")
    return max(cosine(feature, rf) for rf in real_features)


def instance_existence(image: Image, c_o: int, backend: Backend,
                       tau_det: float):
    """Detect instances and keep those strictly above tau_det.

    Returns:
        (passed, b_h, b_o) where b_h are person boxes, b_o boxes of the
        prompted object class. An object class equal to the person class
        reuses the person set. Passing needs both sets non-empty.
    """
    dets = [d for d in backend.detect(image, score_floor=0.0) if d.score > tau_det]
    b_h = [d.box for d in dets if d.label == PERSON_LABEL]
    if c_o == PERSON_LABEL:
        b_o = list(b_h)
    else:
        b_o = [d.box for d in dets if d.label == c_o]
    return (len(b_h) > 0 and len(b_o) > 0), b_h, b_o


def interactiveness(image: Image, text: str, b_h: list, b_o: list,
                    backend: Backend, tau_inter: float):
    """Score every (person, object) pair on the pair-masked image.

    Exactly len(b_h) * len(b_o) scoring calls are made, person-major.
    The best-scoring pair is chosen (ties keep the earliest) and the
    stage passes iff its score strictly exceeds tau_inter.

    Returns:
        (passed, best_score, best_pair)
    """
    if not b_h or not b_o:
        raise InvalidInputError("interactiveness needs non-empty candidate sets")
    best_score = -np.inf
    best_pair = None
    for bh in b_h:
        for bo in b_o:
            masked = union_mask(image, bh, bo)
            score = float(backend.vl_score(masked, text))
            if score > best_score:
                best_score = score
                best_pair = (bh, bo)
    return (best_score > tau_inter), best_score, best_pair


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class GenerationContext:
    """Everything one candidate attempt needs."""

    vocab: object
    words: WordSets
    lexicon: dict
    backend: Backend
    config: MusicConfig
    real_features: list
    master_seed: int = 0


@dataclass
class AttemptResult:
    """One candidate attempt: its prompt, verdicts, and sample if kept."""

    prompt: PromptSpec
    verdicts: list
    sample: Optional[VirtualSample] = None
    image: Optional[Image] = None


def attempt_image_id(c_a: int, c_o: int, attempt: int) -> str:
    return f"v_{c_a:03d}_{c_o:03d}_{attempt:04d}"


def run_filters(image: Image, prompt: PromptSpec, ctx: GenerationContext) -> list:
    """Apply the three stages in order, short-circuiting on failure."""
    verdicts = []
    feature = ctx.backend.scene_embed(image)
    s_scn = scene_similarity(feature, ctx.real_features)
    passed = s_scn > ctx.config.tau_scn
    verdicts.append(FilterVerdict(stage="scene", passed=passed, score=s_scn))
    if not passed:
        return verdicts

    passed, b_h, b_o = instance_existence(image, prompt.c_o, ctx.backend,
                                          ctx.config.tau_det)
    verdicts.append(
        FilterVerdict(stage="instance", passed=passed,
                      n_human=len(b_h), n_object=len(b_o))
    )
    if not passed:
        return verdicts

    passed, s_inter, pair = interactiveness(image, prompt.text, b_h, b_o,
                                            ctx.backend, ctx.config.tau_inter)
    verdicts.append(
        FilterVerdict(stage="interactiveness", passed=passed, score=s_inter,
                      pair=pair)
    )
    return verdicts


def run_pipeline(ctx: GenerationContext, cat: tuple, attempt: int) -> AttemptResult:
    """Build a prompt, synthesize one candidate, and filter it."""
    seed = seed_from("music", ctx.master_seed, cat[0], cat[1], attempt)
    prompt = build_prompt(cat, ctx.words, ctx.vocab, ctx.lexicon, seed)
    image = ctx.backend.generate_image(prompt.text, seed=seed)
    verdicts = run_filters(image, prompt, ctx)
    if not all(v.passed for v in verdicts):
        return AttemptResult(prompt=prompt, verdicts=verdicts, image=image)
    pair = verdicts[-1].pair
    annotation = Annotation(c_a=prompt.c_a, c_o=prompt.c_o, b_h=pair[0], b_o=pair[1])
    sample = VirtualSample(
        image_id=attempt_image_id(prompt.c_a, prompt.c_o, attempt),
        image=image, prompt=prompt, annotation=annotation, verdicts=verdicts,
    )
    return AttemptResult(prompt=prompt, verdicts=verdicts, sample=sample, image=image)


# ---------------------------------------------------------------------------
# budgets
# ---------------------------------------------------------------------------


def budget_for(freq, cat: tuple, dataset_mode: str) -> int:
    """Per-category generation budget under a dataset's rebalancing rule.

    hico: rare categories get 40, the rest 10. vcoco: categories with
    fewer than 10 training instances get 30, the rest 15.
    """
    cat = (int(cat[0]), int(cat[1]))
    if cat not in freq.counts:
        raise ConfigError(f"frequency table has no category {cat}")
    if dataset_mode == "hico":
        return HICO_BUDGET_RARE if freq.rare[cat] else HICO_BUDGET_NON_RARE
    if dataset_mode == "vcoco":
        return VCOCO_BUDGET_LOW if freq.counts[cat] < VCOCO_LOW_COUNT else VCOCO_BUDGET_HIGH
    raise ConfigError(f"unknown dataset mode {dataset_mode!r}; use hico or vcoco")


def generation_budget(freq, dataset_mode: str) -> dict:
    """Budgets for every category in the frequency table."""
    return {cat: budget_for(freq, cat, dataset_mode) for cat in freq.categories()}


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _rejection_record(cat: tuple, attempt: int, prompt: PromptSpec,
                      verdicts: list) -> dict:
    failing = next(v for v in verdicts if not v.passed)
    return {
        "c_a": int(cat[0]),
        "c_o": int(cat[1]),
        "attempt": int(attempt),
        "prompt": prompt.text,
        "stage": failing.stage,
        "score": failing.score,
        "timestamp": _utc_now(),
    }


def generate_for_category(ctx: GenerationContext, cat: tuple, budget: int,
                          max_attempts: Optional[int] = None):
    """Run attempts for one category until its budget is met or the
    attempt cap (10x budget by default) is exhausted.

    Returns:
        (samples, rejections) for this category, in attempt order.
    """
    if budget < 0:
        raise ConfigError(f"budget must be non-negative, got {budget}")
    cap = max_attempts if max_attempts is not None else MAX_ATTEMPTS_PER_BUDGET * budget
    samples, rejections = [], []
    attempt = 0
    while len(samples) < budget and attempt < cap:
        result = run_pipeline(ctx, cat, attempt)
        if result.sample is not None:
            samples.append(result.sample)
        else:
            rejections.append(_rejection_record(cat, attempt, result.prompt,
                                                result.verdicts))
        attempt += 1
    return samples, rejections


def generate_dataset(ctx: GenerationContext, freq, dataset_mode: str,
                     workers: int = 4, budgets: Optional[dict] = None):
    """Generate curated samples for every category in the table.

    Categories run in parallel (attempts within a category stay
    sequential), and per-attempt seeds depend only on (master seed,
    category, attempt), so the result is independent of scheduling.

    Returns:
        (samples, rejections) ordered by category then attempt.
    """
    if budgets is None:
        budgets = generation_budget(freq, dataset_mode)
    cats = sorted(budgets.keys())
    results = {}
    if workers <= 1:
        for cat in cats:
            results[cat] = generate_for_category(ctx, cat, budgets[cat])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                cat: pool.submit(generate_for_category, ctx, cat, budgets[cat])
                for cat in cats
            }
            for cat in cats:
                results[cat] = futures[cat].result()
    samples, rejections = [], []
    for cat in cats:
        s, r = results[cat]
        samples.extend(s)
        rejections.extend(r)
    return samples, rejections


def filter_candidates(ctx: GenerationContext, manifest, provider):
    """Re-run the filter cascade over an existing candidate manifest.

    Each image row must carry provenance with the prompt draws. Kept
    rows become virtual samples; the rest produce rejection records.
    """
    samples, rejections = [], []
    for entry in manifest.images:
        prov = entry.provenance or {}
        needed = ("prompt", "category", "w_h", "w_s")
        if any(k not in prov for k in needed):
            raise InvalidInputError(
                f"image {entry.id!r} lacks prompt provenance; cannot filter"
            )
        c_a, c_o = int(prov["category"][0]), int(prov["category"][1])
        prompt = PromptSpec(c_a=c_a, c_o=c_o, w_h=prov["w_h"], w_s=prov["w_s"],
                            text=prov["prompt"])
        image = provider.load(entry)
        verdicts = run_filters(image, prompt, ctx)
        if all(v.passed for v in verdicts):
            pair = verdicts[-1].pair
            samples.append(
                VirtualSample(
                    image_id=entry.id, image=image, prompt=prompt,
                    annotation=Annotation(c_a=c_a, c_o=c_o, b_h=pair[0], b_o=pair[1]),
                    verdicts=verdicts,
                )
            )
        else:
            attempt = int(prov.get("attempt", -1))
            rejections.append(
                _rejection_record((c_a, c_o), attempt, prompt, verdicts)
            )
    return samples, rejections


def sample_provenance(sample: VirtualSample) -> dict:
    """Provenance dict stored on a virtual image's manifest row."""
    prov = {
        "prompt": sample.prompt.text,
        "category": [sample.prompt.c_a, sample.prompt.c_o],
        "w_h": sample.prompt.w_h,
        "w_s": sample.prompt.w_s,
    }
    for v in sample.verdicts:
        if v.stage == "scene":
            prov["scene_score"] = float(v.score)
        elif v.stage == "instance":
            prov["instance_counts"] = [int(v.n_human), int(v.n_object)]
        elif v.stage == "interactiveness":
            prov["inter_score"] = float(v.score)
    return prov
