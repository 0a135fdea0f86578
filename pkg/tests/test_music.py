from dataclasses import dataclass, field

import numpy as np
import pytest

from vil import music
from vil.backends import MockBackend
from vil.errors import ConfigError, InvalidInputError
from vil.dataio import FrequencyTable
from vil.geometry import Box, Image, union_mask
from vil.scenes import seed_from
from vil.toyworld import TOY_LEXICON, toy_backend, toy_vocab, toy_word_sets


def small_words(cats):
    return music.WordSets(
        human_words=["man", "woman"],
        scene_words=["park", "street"],
        scene_map={cat: ["park", "street"] for cat in cats},
    )


class TestWordSets:
    def test_validation(self):
        with pytest.raises(ConfigError):
            music.WordSets([], ["park"], {})
        with pytest.raises(ConfigError):
            music.WordSets(["man"], [], {})
        with pytest.raises(ConfigError):
            music.WordSets(["man"], ["park"], {(0, 0): []})
        with pytest.raises(ConfigError):
            music.WordSets(["man"], ["park"], {(0, 0): ["beach"]})


class TestPrompts:
    def test_render_template_and_articles(self):
        vocab = toy_vocab()
        c_a = vocab.interactions.index("eat")
        c_o = vocab.objects.index("apple")
        text = music.render_prompt(c_a, c_o, "old man", "park", vocab, TOY_LEXICON)
        assert text == "a photo of an old man eating an apple in the park"

    def test_render_underscores_become_spaces(self):
        vocab = toy_vocab()
        c_a = vocab.interactions.index("talk_to")
        c_o = vocab.objects.index("dog")
        text = music.render_prompt(c_a, c_o, "woman", "living_room", vocab, TOY_LEXICON)
        assert text == "a photo of a woman talking to a dog in the living room"

    def test_render_missing_gerund(self):
        vocab = toy_vocab()
        with pytest.raises(ConfigError):
            music.render_prompt(0, 1, "man", "park", vocab, {})

    def test_build_prompt_deterministic(self):
        vocab = toy_vocab()
        words = small_words([(0, 1)])
        a = music.build_prompt((0, 1), words, vocab, TOY_LEXICON, rng_seed=7)
        b = music.build_prompt((0, 1), words, vocab, TOY_LEXICON, rng_seed=7)
        assert a == b
        assert a.w_h in words.human_words
        assert a.w_s in words.scene_map[(0, 1)]
        assert a.text.startswith("a photo of ")

    def test_build_prompt_validates_category(self):
        vocab = toy_vocab()
        words = small_words([(0, 1)])
        with pytest.raises(ConfigError):
            music.build_prompt((99, 1), words, vocab, TOY_LEXICON, 0)
        with pytest.raises(ConfigError):
            music.build_prompt((0, 2), words, vocab, TOY_LEXICON, 0)


class TestMusicConfig:
    def test_threshold_bounds(self):
        music.MusicConfig(tau_scn=0.0, tau_det=1.0, tau_inter=0.5)
        with pytest.raises(ConfigError):
            music.MusicConfig(tau_scn=1.5)
        with pytest.raises(ConfigError):
            music.MusicConfig(tau_inter=-0.1)


class TestSceneSimilarity:
    def test_matches_max_cosine_oracle(self, rng):
        for _ in range(100):
            dim = int(rng.integers(2, 8))
            pool = [rng.standard_normal(dim) for _ in range(int(rng.integers(1, 6)))]
            feat = rng.standard_normal(dim)
            oracle = max(
                float(np.dot(feat, p) / (np.linalg.norm(feat) * np.linalg.norm(p)))
                for p in pool
            )
            assert music.scene_similarity(feat, pool) == pytest.approx(oracle, abs=1e-12)

    def test_empty_pool(self):
        with pytest.raises(InvalidInputError):
            music.scene_similarity(np.ones(3), [])

    def test_cosine_errors(self):
        with pytest.raises(InvalidInputError):
            music.cosine(np.ones(3), np.ones(4))
        with pytest.raises(InvalidInputError):
            music.cosine(np.zeros(3), np.ones(3))

    def test_exact_boundary_is_rejected_by_strict_rule(self):
        # cosine([3,4], e0) is exactly 0.6 in floating point, so a
        # threshold of 0.6 must reject under the strict > rule
        feat = np.array([3.0, 4.0])
        pool = [np.array([1.0, 0.0])]
        s = music.scene_similarity(feat, pool)
        assert s == 0.6
        assert not (s > 0.6)


class CountingBackend(MockBackend):
    """MockBackend that counts detect/vl/scene calls."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.n_detect = 0
        self.n_vl = 0
        self.n_scene = 0

    def detect(self, image, score_floor=0.0):
        self.n_detect += 1
        return super().detect(image, score_floor)

    def vl_score(self, image, text):
        self.n_vl += 1
        return super().vl_score(image, text)

    def scene_embed(self, image):
        self.n_scene += 1
        return super().scene_embed(image)


class TestInstanceExistence:
    def test_strictly_above_threshold(self):
        img = Image.blank(16, 16)
        key = img.content_hash()
        table = {key: [
            {"label": 0, "score": 0.9, "box": [0, 0, 4, 4]},     # boundary, out
            {"label": 0, "score": 0.91, "box": [5, 5, 9, 9]},    # in
            {"label": 2, "score": 0.95, "box": [10, 10, 14, 14]},
        ]}
        backend = MockBackend(detection_table=table)
        passed, b_h, b_o = music.instance_existence(img, 2, backend, tau_det=0.9)
        assert passed
        assert b_h == [Box(5, 5, 9, 9)]
        assert b_o == [Box(10, 10, 14, 14)]

    def test_person_class_object_reuses_person_set(self):
        img = Image.blank(16, 16)
        key = img.content_hash()
        table = {key: [
            {"label": 0, "score": 0.95, "box": [0, 0, 4, 4]},
            {"label": 0, "score": 0.96, "box": [5, 5, 9, 9]},
        ]}
        backend = MockBackend(detection_table=table)
        passed, b_h, b_o = music.instance_existence(img, 0, backend, tau_det=0.9)
        assert passed
        assert b_o == b_h
        assert b_o is not b_h  # independent list

    def test_fails_without_either_set(self):
        img = Image.blank(16, 16)
        backend = MockBackend(detection_table={})
        passed, b_h, b_o = music.instance_existence(img, 2, backend, tau_det=0.9)
        assert not passed and b_h == [] and b_o == []


class TestInteractiveness:
    def layout(self):
        img = Image.blank(32, 32, fill=60)
        b_h = [Box(2, 2, 10, 10), Box(12, 2, 20, 10)]
        b_o = [Box(2, 14, 10, 22), Box(12, 14, 20, 22)]
        return img, b_h, b_o

    def program(self, img, b_h, b_o, text, scores):
        table = {}
        for i, bh in enumerate(b_h):
            for j, bo in enumerate(b_o):
                masked = union_mask(img, bh, bo)
                table[(masked.content_hash(), text)] = scores[(i, j)]
        return table

    def test_exact_call_count_and_best_pair(self):
        img, b_h, b_o = self.layout()
        text = "a photo of a man holding a cup in the park"
        scores = {(0, 0): 0.40, (0, 1): 0.35, (1, 0): 0.90, (1, 1): 0.50}
        backend = CountingBackend(vl_table=self.program(img, b_h, b_o, text, scores))
        passed, best, pair = music.interactiveness(img, text, b_h, b_o, backend, 0.3)
        assert backend.n_vl == 4
        assert passed and best == 0.90
        assert pair == (b_h[1], b_o[0])

    def test_tie_keeps_earliest_person_major(self):
        img, b_h, b_o = self.layout()
        text = "t"
        scores = {(0, 0): 0.7, (0, 1): 0.7, (1, 0): 0.7, (1, 1): 0.7}
        backend = MockBackend(vl_table=self.program(img, b_h, b_o, text, scores))
        _, best, pair = music.interactiveness(img, text, b_h, b_o, backend, 0.3)
        assert best == 0.7
        assert pair == (b_h[0], b_o[0])

    def test_boundary_score_fails(self):
        img, b_h, b_o = self.layout()
        text = "t"
        scores = {(0, 0): 0.3, (0, 1): 0.1, (1, 0): 0.1, (1, 1): 0.1}
        backend = MockBackend(vl_table=self.program(img, b_h, b_o, text, scores))
        passed, best, _ = music.interactiveness(img, text, b_h, b_o, backend, 0.3)
        assert best == 0.3
        assert not passed

    def test_empty_sets_rejected(self):
        img, b_h, b_o = self.layout()
        with pytest.raises(InvalidInputError):
            music.interactiveness(img, "t", [], b_o, MockBackend(), 0.3)


# ---------------------------------------------------------------------------
# programmed corpus: full-pipeline accept/reject plans with exact expectations
# ---------------------------------------------------------------------------

P_A = Box(2, 2, 10, 10)
P_B = Box(12, 2, 20, 10)
O_A = Box(2, 14, 10, 22)
O_B = Box(12, 14, 20, 22)


@dataclass
class Plan:
    """One programmed attempt: what each stage sees and what must happen."""

    name: str
    scene: str  # "match" | "orth" | "diag"
    detections: list = field(default_factory=list)
    vl_scores: dict = field(default_factory=dict)  # (hi, oi) -> score
    expect: str = "keep"  # or the failing stage name
    expect_pair: tuple = (0, 0)


def plans_for(c_o: int) -> list:
    person = lambda box, s: {"label": 0, "score": s, "box": list(box.as_array())}
    obj = lambda box, s: {"label": c_o, "score": s, "box": list(box.as_array())}
    if c_o == 0:
        # prompted object is the person class: the person set is reused,
        # so pairs enumerate persons x persons
        return [
            Plan("scene-orth", "orth", expect="scene"),
            Plan("scene-diag", "diag", expect="scene"),
            Plan("det-boundary", "match",
                 [person(P_A, 0.9)], expect="instance"),
            Plan("det-nobody", "match",
                 [obj(O_A, 0.95)] if c_o != 0 else [], expect="instance"),
            Plan("vl-boundary", "match", [person(P_A, 0.95)],
                 {(0, 0): 0.3}, expect="interactiveness"),
            Plan("keep-pairing", "match",
                 [person(P_A, 0.95), person(P_B, 0.96)],
                 {(0, 0): 0.2, (0, 1): 0.8, (1, 0): 0.5, (1, 1): 0.4},
                 expect="keep", expect_pair=(0, 1)),
            Plan("keep-tie", "match",
                 [person(P_A, 0.95), person(P_B, 0.96)],
                 {(0, 0): 0.7, (0, 1): 0.7, (1, 0): 0.7, (1, 1): 0.7},
                 expect="keep", expect_pair=(0, 0)),
            Plan("vl-low", "match", [person(P_A, 0.95)],
                 {(0, 0): 0.05}, expect="interactiveness"),
        ]
    return [
        Plan("scene-orth", "orth", expect="scene"),
        Plan("scene-diag", "diag", expect="scene"),
        Plan("det-boundary", "match",
             [person(P_A, 0.9), obj(O_A, 0.95)], expect="instance"),
        Plan("det-noobject", "match",
             [person(P_A, 0.95), obj(O_A, 0.9)], expect="instance"),
        Plan("vl-boundary", "match", [person(P_A, 0.95), obj(O_A, 0.95)],
             {(0, 0): 0.3}, expect="interactiveness"),
        Plan("keep-single", "match", [person(P_A, 0.95), obj(O_A, 0.95)],
             {(0, 0): 0.8}, expect="keep", expect_pair=(0, 0)),
        Plan("keep-best", "match",
             [person(P_A, 0.95), person(P_B, 0.96), obj(O_A, 0.95), obj(O_B, 0.97)],
             {(0, 0): 0.40, (0, 1): 0.35, (1, 0): 0.90, (1, 1): 0.50},
             expect="keep", expect_pair=(1, 0)),
        Plan("keep-tie", "match",
             [person(P_A, 0.95), person(P_B, 0.96), obj(O_A, 0.95)],
             {(0, 0): 0.7, (1, 0): 0.7},
             expect="keep", expect_pair=(0, 0)),
        Plan("vl-low", "match", [person(P_A, 0.95), obj(O_A, 0.95)],
             {(0, 0): 0.05}, expect="interactiveness"),
    ]


def pair_boxes(plan: Plan, c_o: int, tau_det: float):
    """Replicate the candidate pair sets the pipeline will derive."""
    kept = [d for d in plan.detections if d["score"] > tau_det]
    b_h = [Box.from_sequence(d["box"]) for d in kept if d["label"] == 0]
    if c_o == 0:
        b_o = list(b_h)
    else:
        b_o = [Box.from_sequence(d["box"]) for d in kept if d["label"] == c_o]
    return b_h, b_o


def build_programmed_context(master_seed: int, cats: list, n_attempts: int,
                             dim: int = 4):
    """Program a table-mode backend so attempt k of each category follows
    plans_for(c_o)[k % len(plans)] exactly.

    Returns:
        (ctx, expected) where expected maps (cat, attempt) to
        (plan, b_h, b_o) with the derived candidate sets.
    """
    vocab = toy_vocab()
    words = small_words(cats)
    config = music.MusicConfig(tau_scn=0.9, tau_det=0.9, tau_inter=0.3)
    e0 = np.zeros(dim)
    e0[0] = 1.0
    orth = np.zeros(dim)
    orth[1] = 1.0
    diag = np.zeros(dim)
    diag[0] = diag[1] = 1.0
    scene_vecs = {"match": e0, "orth": orth, "diag": diag}

    probe = MockBackend(seed=master_seed, canvas=(32, 32))
    scene_table, detection_table, vl_table = {}, {}, {}
    expected = {}
    seen_hashes = set()
    for cat in cats:
        plans = plans_for(cat[1])
        for attempt in range(n_attempts):
            plan = plans[attempt % len(plans)]
            seed = seed_from("music", master_seed, cat[0], cat[1], attempt)
            prompt = music.build_prompt(cat, words, vocab, TOY_LEXICON, seed)
            image = probe.generate_image(prompt.text, seed=seed)
            h = image.content_hash()
            assert h not in seen_hashes, "stamp collision would break programming"
            seen_hashes.add(h)
            scene_table[h] = scene_vecs[plan.scene]
            detection_table[h] = plan.detections
            b_h, b_o = pair_boxes(plan, cat[1], config.tau_det)
            for (i, j), score in plan.vl_scores.items():
                masked = union_mask(image, b_h[i], b_o[j])
                vl_table[(masked.content_hash(), prompt.text)] = score
            expected[(cat, attempt)] = (plan, b_h, b_o)
    backend = CountingBackend(
        seed=master_seed, canvas=(32, 32), scene_table=scene_table,
        detection_table=detection_table, vl_table=vl_table,
        default_vl_score=0.0,
    )
    ctx = music.GenerationContext(
        vocab=vocab, words=words, lexicon=TOY_LEXICON, backend=backend,
        config=config, real_features=[e0], master_seed=master_seed,
    )
    return ctx, expected


class TestProgrammedPipeline:
    def test_200_attempts_match_analytic_expectation(self):
        cats = [(0, 1), (3, 0), (5, 2)]
        per_cat = 67  # 3 * 67 = 201 > 200 programmed attempts
        ctx, expected = build_programmed_context(11, cats, per_cat)
        backend = ctx.backend
        n_detect_expected = 0
        n_vl_expected = 0
        checked = 0
        for cat in cats:
            for attempt in range(per_cat):
                plan, b_h, b_o = expected[(cat, attempt)]
                result = music.run_pipeline(ctx, cat, attempt)
                if plan.expect == "keep":
                    assert result.sample is not None, (cat, attempt, plan.name)
                    hi, oi = plan.expect_pair
                    ann = result.sample.annotation
                    assert ann.b_h == b_h[hi], (cat, attempt, plan.name)
                    assert ann.b_o == b_o[oi], (cat, attempt, plan.name)
                    assert ann.c_a == cat[0] and ann.c_o == cat[1]
                else:
                    assert result.sample is None, (cat, attempt, plan.name)
                    failing = [v for v in result.verdicts if not v.passed]
                    assert len(failing) == 1
                    assert failing[0].stage == plan.expect, (cat, attempt, plan.name)
                    assert failing[0] is result.verdicts[-1]
                if plan.expect != "scene":
                    n_detect_expected += 1
                if plan.expect not in ("scene", "instance"):
                    n_vl_expected += len(b_h) * len(b_o)
                checked += 1
        assert checked >= 200
        # short-circuiting: failed stages stop all later model calls
        assert backend.n_detect == n_detect_expected
        assert backend.n_vl == n_vl_expected

    def test_rejection_records_carry_stage_and_timestamp(self):
        cats = [(0, 1)]
        ctx, expected = build_programmed_context(11, cats, 5)
        samples, rejections = music.generate_for_category(
            ctx, (0, 1), budget=2, max_attempts=5)
        plans = [expected[((0, 1), k)][0] for k in range(5)]
        want_keep = sum(1 for p in plans if p.expect == "keep")
        assert len(samples) == want_keep
        assert len(rejections) == 5 - want_keep
        for rec in rejections:
            assert rec["stage"] in ("scene", "instance", "interactiveness")
            assert "timestamp" in rec
            assert rec["prompt"].startswith("a photo of ")


class TestBudgets:
    def make_freq(self):
        return FrequencyTable.from_counts(
            {(0, 1): 3, (1, 2): 9, (2, 3): 10, (3, 4): 120})

    def test_hico_rule(self):
        freq = self.make_freq()
        assert music.budget_for(freq, (0, 1), "hico") == 40
        assert music.budget_for(freq, (1, 2), "hico") == 40
        assert music.budget_for(freq, (2, 3), "hico") == 10
        assert music.budget_for(freq, (3, 4), "hico") == 10

    def test_vcoco_rule(self):
        freq = self.make_freq()
        assert music.budget_for(freq, (0, 1), "vcoco") == 30
        assert music.budget_for(freq, (1, 2), "vcoco") == 30
        assert music.budget_for(freq, (2, 3), "vcoco") == 15
        assert music.budget_for(freq, (3, 4), "vcoco") == 15

    def test_unknown_mode_and_category(self):
        freq = self.make_freq()
        with pytest.raises(ConfigError):
            music.budget_for(freq, (0, 1), "coco")
        with pytest.raises(ConfigError):
            music.budget_for(freq, (9, 9), "hico")

    def test_generation_budget_covers_table(self):
        freq = self.make_freq()
        budgets = music.generation_budget(freq, "hico")
        assert set(budgets) == set(freq.categories())
        assert budgets[(0, 1)] == 40


class TestGenerateForCategory:
    def toy_ctx(self, seed=0):
        vocab = toy_vocab()
        words = toy_word_sets()
        backend = toy_backend(seed)
        real = [backend.scene_embed(backend.generate_image(
            music.build_prompt((0, 1), words, vocab, TOY_LEXICON, k).text, seed=k))
            for k in range(3)]
        ctx = music.GenerationContext(
            vocab=vocab, words=words, lexicon=TOY_LEXICON, backend=backend,
            config=music.MusicConfig(), real_features=real, master_seed=seed,
        )
        return ctx

    def test_negative_budget(self):
        with pytest.raises(ConfigError):
            music.generate_for_category(self.toy_ctx(), (0, 1), -1)

    def test_zero_budget_runs_nothing(self):
        samples, rejections = music.generate_for_category(self.toy_ctx(), (0, 1), 0)
        assert samples == [] and rejections == []

    def test_attempt_cap(self):
        # impossible threshold: every attempt is rejected, the cap stops it
        ctx = self.toy_ctx()
        ctx.config = music.MusicConfig(tau_scn=1.0)
        samples, rejections = music.generate_for_category(ctx, (0, 1), 2)
        assert samples == []
        assert len(rejections) == 2 * music.MAX_ATTEMPTS_PER_BUDGET

    def test_ids_follow_attempt_indices(self):
        ctx = self.toy_ctx()
        samples, _ = music.generate_for_category(ctx, (0, 1), 2)
        assert len(samples) == 2
        for s in samples:
            assert s.image_id.startswith("v_000_001_")


class TestGenerateDataset:
    def test_worker_count_does_not_change_results(self):
        from vil.toyworld import TOY_PAIRS
        ctx1 = TestGenerateForCategory().toy_ctx(seed=3)
        ctx4 = TestGenerateForCategory().toy_ctx(seed=3)
        cats = [TOY_PAIRS[0], TOY_PAIRS[5], TOY_PAIRS[12]]
        freq = FrequencyTable.from_counts({cats[0]: 2, cats[1]: 50, cats[2]: 3})
        budgets = {cat: 2 for cat in freq.categories()}
        s1, r1 = music.generate_dataset(ctx1, freq, "hico", workers=1, budgets=budgets)
        s4, r4 = music.generate_dataset(ctx4, freq, "hico", workers=4, budgets=budgets)
        assert [s.image_id for s in s1] == [s.image_id for s in s4]
        assert [s.prompt for s in s1] == [s.prompt for s in s4]
        assert [s.annotation for s in s1] == [s.annotation for s in s4]
        strip = lambda rows: [{k: v for k, v in r.items() if k != "timestamp"}
                              for r in rows]
        assert strip(r1) == strip(r4)


class TestFilterCandidates:
    def test_missing_provenance(self):
        from vil.dataio import ImageEntry, Manifest, MemoryImageProvider
        ctx = TestGenerateForCategory().toy_ctx()
        manifest = Manifest(
            vocab=toy_vocab(),
            images=[ImageEntry(id="x", path="", width=48, height=48)],
        )
        provider = MemoryImageProvider({"x": Image.blank(48, 48)})
        with pytest.raises(InvalidInputError, match="provenance"):
            music.filter_candidates(ctx, manifest, provider)
