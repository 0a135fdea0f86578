import json

import numpy as np
import pytest
import requests

from vil import dataio, wire
from vil.backends import (
    CacheBackend,
    Detection,
    MockBackend,
    PromptGrammar,
    RemoteBackend,
)
from vil.errors import (
    ConfigError,
    InvalidInputError,
    MissingFeatureError,
    TransportError,
)
from vil.geometry import Box, Image
from vil.toyworld import toy_vocab, toy_word_sets, TOY_LEXICON


def toy_grammar():
    return PromptGrammar(toy_vocab(), TOY_LEXICON, toy_word_sets().scene_words)


class TestPromptGrammar:
    def test_parses_built_prompt(self):
        g = toy_grammar()
        c_a, c_o, scene, human = g.parse("a photo of a man riding a horse in the park")
        vocab = toy_vocab()
        assert vocab.interactions[c_a] == "ride"
        assert vocab.objects[c_o] == "horse"
        assert scene == "park"
        assert human == "man"

    def test_underscore_words_round_trip(self):
        g = toy_grammar()
        c_a, c_o, scene, _ = g.parse(
            "a photo of a woman talking to a dog in the living room")
        vocab = toy_vocab()
        assert vocab.interactions[c_a] == "talk_to"
        assert vocab.objects[c_o] == "dog"
        assert scene == "living_room"

    def test_person_object(self):
        g = toy_grammar()
        c_a, c_o, _, _ = g.parse("a photo of a boy talking to a person in the street")
        assert c_o == 0

    def test_rejects_off_template(self):
        g = toy_grammar()
        with pytest.raises(InvalidInputError):
            g.parse("a painting of a man riding a horse in the park")
        with pytest.raises(InvalidInputError):
            g.parse("a photo of a man riding a horse")
        with pytest.raises(InvalidInputError):
            g.parse("a photo of a man riding a spaceship in the park")
        with pytest.raises(InvalidInputError):
            g.parse("a photo of a man juggling a horse in the park")


class TestMockBackendModes:
    def test_rejects_unknown_mode(self):
        with pytest.raises(ConfigError):
            MockBackend(scene_mode="psychic")
        with pytest.raises(ConfigError):
            MockBackend(generate_mode="scene")  # needs a grammar
        with pytest.raises(ConfigError):
            MockBackend(vl_mode="decode")

    def test_stamp_generation_deterministic(self):
        b1 = MockBackend(seed=5)
        b2 = MockBackend(seed=5)
        a = b1.generate_image("a photo of x", seed=3)
        b = b2.generate_image("a photo of x", seed=3)
        assert np.array_equal(a.pixels, b.pixels)
        c = b1.generate_image("a photo of x", seed=4)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_stamp_depends_on_prompt(self):
        b = MockBackend(seed=5)
        a = b.generate_image("prompt one")
        c = b.generate_image("prompt two")
        assert not np.array_equal(a.pixels, c.pixels)

    def test_image_table_override(self):
        img = Image.blank(8, 8, fill=3)
        b = MockBackend(image_table={"magic": img})
        got = b.generate_image("magic")
        assert np.array_equal(got.pixels, img.pixels)
        assert got is not img  # defensive copy

    def test_empty_prompt_rejected(self):
        with pytest.raises(InvalidInputError):
            MockBackend().generate_image("  ")

    def test_scene_table_and_prototype_fallback(self):
        img = Image.blank(8, 8, fill=9)
        key = img.content_hash()
        vec = np.zeros(4)
        vec[0] = 1.0
        b = MockBackend(scene_table={key: vec}, feature_dim=4)
        assert np.array_equal(b.scene_embed(img), vec)
        other = Image.blank(8, 8, fill=10)
        proto = b.scene_embed(other)
        assert proto.shape == (4,)
        assert np.linalg.norm(proto) == pytest.approx(1.0)

    def test_detection_table(self):
        img = Image.blank(8, 8)
        key = img.content_hash()
        b = MockBackend(detection_table={
            key: [{"label": 2, "score": 0.95, "box": [0, 0, 4, 4]},
                  {"label": 0, "score": 0.5, "box": [1, 1, 3, 3]}]})
        dets = b.detect(img, score_floor=0.6)
        assert len(dets) == 1
        assert dets[0].label == 2
        assert b.detect(Image.blank(8, 8, fill=1)) == []

    def test_vl_table_with_default(self):
        img = Image.blank(8, 8)
        key = img.content_hash()
        b = MockBackend(vl_table={(key, "yes"): 0.8}, default_vl_score=0.1)
        assert b.vl_score(img, "yes") == 0.8
        assert b.vl_score(img, "no") == 0.1

    def test_vl_hash_mode_deterministic(self):
        b = MockBackend(vl_mode="hash", seed=2)
        img = Image.blank(8, 8)
        s1 = b.vl_score(img, "text")
        assert 0.0 <= s1 <= 1.0
        assert b.vl_score(img, "text") == s1
        assert b.vl_score(img, "other") != s1

    def test_detection_floor_validation(self):
        with pytest.raises(InvalidInputError):
            MockBackend().detect(Image.blank(8, 8), score_floor=1.5)


class TestMockBackendToy:
    def make(self, seed=0):
        return MockBackend.toy(toy_vocab(), TOY_LEXICON,
                               toy_word_sets().scene_words, seed=seed,
                               canvas=(48, 48))

    def test_scene_generation_decodable(self):
        b = self.make()
        img = b.generate_image("a photo of a man riding a horse in the park", seed=1)
        assert img.width == 48 and img.height == 48
        dets = b.detect(img, score_floor=0.9)
        vocab = toy_vocab()
        labels = sorted(d.label for d in dets)
        assert labels == [0, vocab.objects.index("horse")]

    def test_person_person_scene(self):
        b = self.make()
        img = b.generate_image(
            "a photo of a woman talking to a person in the park", seed=2)
        dets = b.detect(img)
        assert [d.label for d in dets].count(0) == 2

    def test_vl_decode_separates_match(self):
        b = self.make()
        prompt = "a photo of a man riding a horse in the park"
        img = b.generate_image(prompt, seed=1)
        assert b.vl_score(img, prompt) > 0.8
        assert b.vl_score(img, "a photo of a man riding a cart in the park") < 0.2

    def test_descriptor(self):
        d = self.make().descriptor()
        assert d.kind == "mock"
        assert d.detail == "scene/grid/decode/decode"


class TestDetectionDataclass:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            Detection(label=-1, score=0.5, box=Box(0, 0, 1, 1))
        with pytest.raises(InvalidInputError):
            Detection(label=0, score=1.5, box=Box(0, 0, 1, 1))


class TestCacheBackend:
    def build_cache(self, tmp_path):
        img = Image.blank(8, 8, fill=50)
        key = img.content_hash()
        dataio.write_feature_cache(
            tmp_path / "features.idx.jsonl", tmp_path / "features.bin",
            {key: np.arange(6, dtype=np.float32)})
        dataio.write_detection_cache(
            tmp_path / "detections.jsonl",
            {key: [{"label": 1, "score": 0.9, "box": [0, 0, 4, 4]}]})
        dataio.write_vl_cache(tmp_path / "vl_scores.jsonl", {(key, "t"): 0.4})
        (tmp_path / "imgs").mkdir()
        (tmp_path / "imgs" / "p.png").write_bytes(img.to_png_bytes())
        dataio.write_image_cache(tmp_path / "images.jsonl", {"prompt": "imgs/p.png"})
        return img, key

    def test_replays_everything(self, tmp_path):
        img, key = self.build_cache(tmp_path)
        b = CacheBackend(tmp_path)
        assert np.array_equal(b.scene_embed(img), np.arange(6, dtype=np.float32))
        dets = b.detect(img)
        assert dets[0].label == 1 and dets[0].box == Box(0, 0, 4, 4)
        assert b.vl_score(img, "t") == 0.4
        got = b.generate_image("prompt")
        assert np.array_equal(got.pixels, img.pixels)
        assert b.descriptor().kind == "cache"
        assert b.descriptor().feature_dim == 6

    def test_missing_entries_raise(self, tmp_path):
        img, _ = self.build_cache(tmp_path)
        b = CacheBackend(tmp_path)
        stranger = Image.blank(8, 8, fill=51)
        with pytest.raises(MissingFeatureError):
            b.scene_embed(stranger)
        with pytest.raises(MissingFeatureError):
            b.detect(stranger)
        with pytest.raises(MissingFeatureError):
            b.vl_score(img, "unknown text")
        with pytest.raises(MissingFeatureError):
            b.generate_image("unknown prompt")

    def test_requires_feature_index(self, tmp_path):
        with pytest.raises(ConfigError):
            CacheBackend(tmp_path)


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text or (json.dumps(payload) if payload is not None else "")

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    """Scripted session: pops one response (or exception) per request."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def _next(self, url):
        self.calls.append(url)
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    def get(self, url, timeout=None):
        return self._next(url)

    def post(self, url, json=None, timeout=None):
        return self._next(url)


HEALTH = {
    "status": "ok",
    "models": {"generator": "g", "scene": "s", "detector": "d", "vl": "v"},
    "feature_dim": 6,
}


class TestRemoteBackend:
    def test_rejects_bad_url(self):
        with pytest.raises(ConfigError):
            RemoteBackend("ftp://nope", check_health=False)
        with pytest.raises(ConfigError):
            RemoteBackend("", check_health=False)

    def test_health_checked_on_construction(self):
        session = FakeSession([FakeResponse(200, HEALTH)])
        b = RemoteBackend("http://svc", session=session)
        assert b.descriptor().feature_dim == 6
        assert session.calls == ["http://svc/health"]

    def test_health_failure_raises_transport(self):
        session = FakeSession([requests.ConnectionError("down")])
        with pytest.raises(TransportError):
            RemoteBackend("http://svc", session=session)

    def test_retries_5xx_then_succeeds(self):
        img = Image.blank(4, 4)
        session = FakeSession([
            FakeResponse(500, text="boom"),
            FakeResponse(200, {"score": 0.5}),
        ])
        b = RemoteBackend("http://svc", session=session, check_health=False,
                          max_retries=3)
        assert b.vl_score(img, "t") == 0.5
        assert len(session.calls) == 2

    def test_gives_up_after_max_retries(self):
        session = FakeSession([FakeResponse(500), FakeResponse(502),
                               FakeResponse(503)])
        b = RemoteBackend("http://svc", session=session, check_health=False,
                          max_retries=3)
        with pytest.raises(TransportError) as err:
            b.vl_score(Image.blank(4, 4), "t")
        assert err.value.attempts == 3
        assert err.value.status == 503

    def test_4xx_fails_immediately(self):
        session = FakeSession([FakeResponse(404, text="nope")])
        b = RemoteBackend("http://svc", session=session, check_health=False)
        with pytest.raises(TransportError) as err:
            b.vl_score(Image.blank(4, 4), "t")
        assert err.value.attempts == 1
        assert len(session.calls) == 1

    def test_connection_errors_retried(self):
        session = FakeSession([
            requests.ConnectionError("a"),
            requests.Timeout("b"),
            FakeResponse(200, {"score": 0.1}),
        ])
        b = RemoteBackend("http://svc", session=session, check_health=False,
                          max_retries=3)
        assert b.vl_score(Image.blank(4, 4), "t") == 0.1

    def test_schema_invalid_response_raises_parse(self):
        from vil.errors import ParseError
        session = FakeSession([FakeResponse(200, {"score": 7.0})])
        b = RemoteBackend("http://svc", session=session, check_health=False)
        with pytest.raises(ParseError):
            b.vl_score(Image.blank(4, 4), "t")

    def test_non_json_body_raises_transport(self):
        session = FakeSession([FakeResponse(200, None, text="<html>")])
        b = RemoteBackend("http://svc", session=session, check_health=False)
        with pytest.raises(TransportError):
            b.vl_score(Image.blank(4, 4), "t")

    def test_generate_round_trip(self):
        img = Image.blank(4, 4, fill=8)
        session = FakeSession([
            FakeResponse(200, {"image": wire.encode_image(img)})])
        b = RemoteBackend("http://svc", session=session, check_health=False)
        got = b.generate_image("a prompt", seed=1)
        assert np.array_equal(got.pixels, img.pixels)

    def test_detect_round_trip(self):
        session = FakeSession([FakeResponse(200, {"detections": [
            {"label": 2, "score": 0.9, "box": [0.0, 0.0, 2.0, 2.0]}]})])
        b = RemoteBackend("http://svc", session=session, check_health=False)
        dets = b.detect(Image.blank(4, 4), score_floor=0.5)
        assert dets[0].label == 2 and dets[0].box == Box(0, 0, 2, 2)

    def test_scene_embed_round_trip(self):
        session = FakeSession([FakeResponse(200, {"vector": [0.1, 0.2, 0.3]})])
        b = RemoteBackend("http://svc", session=session, check_health=False)
        vec = b.scene_embed(Image.blank(4, 4))
        assert vec.dtype == np.float64
        assert np.allclose(vec, [0.1, 0.2, 0.3])

    def test_max_retries_validation(self):
        with pytest.raises(ConfigError):
            RemoteBackend("http://svc", max_retries=0, check_health=False)
