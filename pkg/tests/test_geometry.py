import numpy as np
import pytest

from vil.errors import InvalidInputError
from vil.geometry import (
    Box,
    Image,
    box_area,
    box_pixel_mask,
    clip_box,
    enclosing_box,
    giou,
    iou,
    union_mask,
)

from conftest import rand_box


class TestBox:
    def test_valid_construction(self):
        b = Box(1.0, 2.0, 4.0, 8.0)
        assert b.width == 3.0
        assert b.height == 6.0
        assert b.center == (2.5, 5.0)

    @pytest.mark.parametrize("coords", [
        (2.0, 0.0, 1.0, 1.0),  # x1 > x2
        (0.0, 0.0, 0.0, 1.0),  # zero width
        (0.0, 3.0, 1.0, 3.0),  # zero height
        (0.0, float("nan"), 1.0, 1.0),
        (0.0, 0.0, float("inf"), 1.0),
    ])
    def test_rejects_degenerate(self, coords):
        with pytest.raises(InvalidInputError):
            Box(*coords)

    def test_translate_scale_hflip(self):
        b = Box(1.0, 2.0, 3.0, 5.0)
        assert b.translate(2.0, -1.0) == Box(3.0, 1.0, 5.0, 4.0)
        assert b.scale(2.0, 3.0) == Box(2.0, 6.0, 6.0, 15.0)
        flipped = b.hflip(10.0)
        assert flipped == Box(7.0, 2.0, 9.0, 5.0)
        assert flipped.hflip(10.0) == b

    def test_from_sequence_round_trip(self):
        b = Box(0.5, 1.5, 2.5, 3.5)
        assert Box.from_sequence(b.as_array()) == b


class TestIoU:
    def test_identical(self):
        b = Box(3.0, 4.0, 10.0, 12.0)
        assert iou(b, b) == 1.0

    def test_disjoint_exact_zero(self):
        assert iou(Box(0, 0, 1, 1), Box(5, 5, 6, 6)) == 0.0

    def test_touching_edge_zero(self):
        assert iou(Box(0, 0, 1, 1), Box(1, 0, 2, 1)) == 0.0

    def test_half_overlap(self):
        assert iou(Box(0, 0, 2, 1), Box(1, 0, 3, 1)) == pytest.approx(1.0 / 3.0)

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            a, b = rand_box(rng), rand_box(rng)
            assert iou(a, b) == iou(b, a)


class TestGIoU:
    def test_fixture_identical(self):
        b = Box(2.0, 3.0, 7.0, 9.0)
        assert giou(b, b) == 1.0

    def test_fixture_touching(self):
        # edge-to-edge: intersection 0, enclosure equals union
        assert giou(Box(0, 0, 1, 1), Box(1, 0, 2, 1)) == 0.0

    def test_fixture_far_corners(self):
        # unit boxes at opposite corners of a 4x4 span:
        # union 2, enclosure 16, giou = 0 - 14/16
        assert giou(Box(0, 0, 1, 1), Box(3, 3, 4, 4)) == -0.875

    def test_properties_random(self):
        rng = np.random.default_rng(7)
        for _ in range(2000):
            a, b = rand_box(rng), rand_box(rng)
            g = giou(a, b)
            assert -1.0 - 1e-9 <= g <= 1.0 + 1e-9
            assert g <= iou(a, b) + 1e-9
            assert abs(g - giou(b, a)) <= 1e-9
            dx, dy = rng.uniform(-50, 50, size=2)
            assert abs(giou(a.translate(dx, dy), b.translate(dx, dy)) - g) <= 1e-9
            s = rng.uniform(0.5, 2.0)
            assert abs(giou(a.scale(s, s), b.scale(s, s)) - g) <= 1e-9


class TestClip:
    def test_inside_untouched(self):
        b = Box(1, 1, 5, 5)
        assert clip_box(b, 10, 10) == b

    def test_clipped(self):
        assert clip_box(Box(-2, -3, 5, 20), 10, 10) == Box(0, 0, 5, 10)

    def test_fully_outside_rejected(self):
        with pytest.raises(InvalidInputError):
            clip_box(Box(20, 20, 30, 30), 10, 10)


class TestMasks:
    def test_pixel_mask_half_open(self):
        m = box_pixel_mask(Box(1.0, 2.0, 3.0, 4.0), 6, 6)
        ys, xs = np.nonzero(m)
        assert set(xs.tolist()) == {1, 2}
        assert set(ys.tolist()) == {2, 3}

    def test_union_mask_zero_outside(self):
        rng = np.random.default_rng(3)
        px = rng.integers(0, 256, size=(3, 20, 20)).astype(np.uint8)
        img = Image(20, 20, px)
        b_h, b_o = Box(2, 2, 6, 6), Box(10, 10, 15, 18)
        out = union_mask(img, b_h, b_o)
        mask = box_pixel_mask(b_h, 20, 20) | box_pixel_mask(b_o, 20, 20)
        assert np.array_equal(out.pixels[:, mask], img.pixels[:, mask])
        assert not out.pixels[:, ~mask].any()
        # input untouched
        assert np.array_equal(img.pixels, px)


class TestImage:
    def test_png_round_trip(self):
        rng = np.random.default_rng(5)
        px = rng.integers(0, 256, size=(3, 13, 17)).astype(np.uint8)
        img = Image(17, 13, px)
        back = Image.from_png_bytes(img.to_png_bytes())
        assert back.width == 17 and back.height == 13
        assert np.array_equal(back.pixels, px)

    def test_content_hash_stability(self):
        img = Image.blank(4, 4, fill=7)
        assert img.content_hash() == img.copy().content_hash()
        other = Image.blank(4, 4, fill=8)
        assert img.content_hash() != other.content_hash()

    def test_area_helpers(self):
        assert box_area(Box(0, 0, 3, 4)) == 12.0
        assert enclosing_box(Box(0, 0, 1, 1), Box(3, 3, 4, 4)) == Box(0, 0, 4, 4)
